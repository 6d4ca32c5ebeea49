"""Device profiles and the layout fitting step.

Before playback, a message's layout is adapted to the target screen:
percent lengths are resolved, oversized layouts are scaled down
uniformly, and every region is clamped inside the device rectangle.
The result uses pixels only and fitting is idempotent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .smil.tree import (
    Dimension,
    Layout,
    Region,
    SmilTree,
    Unit,
    default_layout,
)

MIN_SCREEN = 16


@dataclass(frozen=True)
class DeviceProfile:
    """Target screen, in pixels."""

    name: str
    screen_width: int
    screen_height: int

    def __post_init__(self):
        if self.screen_width < MIN_SCREEN or self.screen_height < MIN_SCREEN:
            raise ValueError(f"screen must be at least {MIN_SCREEN}x{MIN_SCREEN}")


DEFAULT_PROFILE = DeviceProfile("default", 176, 208)

BUILTIN_PROFILES = {
    "default": DEFAULT_PROFILE,
    "qcif": DeviceProfile("qcif", 176, 144),
    "qvga": DeviceProfile("qvga", 320, 240),
}


def load_profile(path: str) -> DeviceProfile:
    """Read a profile from a JSON file: name, screen_width, screen_height."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return DeviceProfile(
        name=str(data.get("name", path)),
        screen_width=int(data["screen_width"]),
        screen_height=int(data["screen_height"]),
    )


def resolve_profile(name_or_path: str | None) -> DeviceProfile:
    """A built-in profile by name, a JSON file by path, or the default."""
    if name_or_path is None:
        return DEFAULT_PROFILE
    if name_or_path in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[name_or_path]
    return load_profile(name_or_path)


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def _resolve(dim: Dimension, basis: int) -> float:
    if dim.unit is Unit.PERCENT:
        return basis * dim.value / 100.0
    return float(dim.value)


def fit(tree: SmilTree, device: DeviceProfile) -> SmilTree:
    """Adapt a valid tree's geometry to the device screen.

    Percent lengths resolve against the message's own root layout (or
    the device when absent). If the root exceeds the screen on either
    axis, all regions shrink by min(device/root) per axis; layouts never
    scale up. Rounding is half-up, degenerate sizes floor to one pixel,
    and the output root layout always equals the device. A tree with no
    layout gets the default two-region screen.
    """
    dev_w, dev_h = device.screen_width, device.screen_height
    layout = tree.layout
    if layout.is_empty():
        layout = default_layout()

    basis_w = layout.root_width if layout.root_width is not None else dev_w
    basis_h = layout.root_height if layout.root_height is not None else dev_h
    scale = 1.0
    if basis_w > dev_w or basis_h > dev_h:
        scale = min(dev_w / basis_w, dev_h / basis_h)

    regions: list[Region] = []
    for region in layout.regions:
        left = _round_half_up(_resolve(region.left, basis_w) * scale)
        top = _round_half_up(_resolve(region.top, basis_h) * scale)
        width = _round_half_up(_resolve(region.width, basis_w) * scale)
        height = _round_half_up(_resolve(region.height, basis_h) * scale)
        width = max(width, 1)
        height = max(height, 1)
        left = min(max(left, 0), dev_w - 1)
        top = min(max(top, 0), dev_h - 1)
        width = max(min(width, dev_w - left), 1)
        height = max(min(height, dev_h - top), 1)
        regions.append(Region(
            id=region.id,
            left=Dimension(left, Unit.PIXELS),
            top=Dimension(top, Unit.PIXELS),
            width=Dimension(width, Unit.PIXELS),
            height=Dimension(height, Unit.PIXELS),
            z_index=region.z_index,
        ))

    fitted = Layout(root_width=dev_w, root_height=dev_h, regions=regions)
    return SmilTree(layout=fitted, pars=list(tree.pars))
