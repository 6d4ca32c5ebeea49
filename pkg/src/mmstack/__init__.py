"""mmstack: a headless MMS messaging stack.

SMIL parsing into a message tree, device layout fitting, an event-based
playback scheduler, a slide composer, multipart/related packing, a
framed client/server transport, and a store-and-forward relay with a
deterministic simulation harness.
"""

__version__ = "0.1.0"

from .smil import SmilTree, default_tree, parse_text, serialize, validate
from .device import DeviceProfile, fit, resolve_profile
from .player import RenderPlan, active_set, build_plan, control
from .mime import MmsEnvelope, MimePart, decapsulate, encapsulate
from .composer import Manifest, SlideSpec, compose, export, load_manifest, preview
from .transport import ClientSession, Command, Pdu, StatusCode, decode_frame, encode_frame
from .relay import RelayCore, ServerConfig
from .sim import ScenarioScript, SimNet, run_scenario
from .bench import bench

__all__ = [
    "ClientSession",
    "Command",
    "DeviceProfile",
    "Manifest",
    "MimePart",
    "MmsEnvelope",
    "Pdu",
    "RelayCore",
    "RenderPlan",
    "ScenarioScript",
    "ServerConfig",
    "SimNet",
    "SlideSpec",
    "SmilTree",
    "StatusCode",
    "active_set",
    "bench",
    "build_plan",
    "compose",
    "control",
    "decapsulate",
    "decode_frame",
    "default_tree",
    "encapsulate",
    "encode_frame",
    "export",
    "fit",
    "load_manifest",
    "parse_text",
    "preview",
    "resolve_profile",
    "run_scenario",
    "serialize",
    "validate",
]
