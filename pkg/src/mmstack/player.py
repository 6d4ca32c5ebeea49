"""Playback engine: event timelines and the player control state machine.

A fitted tree compiles to a RenderPlan, a sorted list of start/stop
events, one pair per par and per media item. The plan is the complete
playback schedule; nothing ticks per-frame. The engine owns no timers:
callers feed elapsed wall time into control(), which makes the whole
thing deterministic and testable on a virtual clock.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .smil.tree import Par, SmilTree

DEFAULT_PAR_MS = 5000


class Action(str, Enum):
    START = "start"
    STOP = "stop"
    PAR_BEGIN = "par_begin"
    PAR_END = "par_end"
    MESSAGE_END = "message_end"


# Sort rank at equal timestamps: stops strictly before starts, message
# end last, so adjacent pars never overlap at the boundary instant.
_ACTION_RANK = {
    Action.STOP: 0,
    Action.PAR_END: 1,
    Action.PAR_BEGIN: 2,
    Action.START: 3,
    Action.MESSAGE_END: 4,
}


@dataclass(frozen=True)
class TimelineEvent:
    at_ms: int
    action: Action
    par_index: int
    media_index: int | None = None
    region_id: str | None = None
    z: int = 0


@dataclass
class RenderPlan:
    """Sorted event timeline plus derived lookup structures.

    events/total_ms are the canonical schedule; par_spans and
    media_intervals are computed alongside for fast queries and are
    fully determined by the events.
    """

    events: list[TimelineEvent]
    total_ms: int
    par_spans: list[tuple[int, int]] = field(default_factory=list)
    media_intervals: list[tuple[int, int, int, int, str | None, int]] = \
        field(default_factory=list)  # (start, stop, par, media, region, z)


class PlanError(Exception):
    pass


class RangeError(Exception):
    """A position, time, or index outside its valid range."""


def par_duration(par: Par, default_ms: int | None = DEFAULT_PAR_MS) -> int:
    """Effective par duration.

    An explicit dur wins. Otherwise, if every media item carries its own
    duration, the par runs until the last one ends; failing that, the
    default applies. With defaulting disabled (None) an unresolvable par
    raises PlanError.
    """
    if par.dur_ms is not None:
        return par.dur_ms
    if par.media and all(m.dur_ms is not None for m in par.media):
        return max(m.begin_ms + m.dur_ms for m in par.media)
    if default_ms is None:
        raise PlanError("par has no duration and no fully-timed media")
    return default_ms


def _z_ranks(par: Par, region_z: dict[str, int]) -> list[int]:
    """Paint rank per media item: region z-index first, document order second."""
    keyed = sorted(
        range(len(par.media)),
        key=lambda i: (region_z.get(par.media[i].region_id or "", 0), i),
    )
    ranks = [0] * len(par.media)
    for rank, media_index in enumerate(keyed):
        ranks[media_index] = rank
    return ranks


def build_plan(tree: SmilTree, default_par_ms: int | None = DEFAULT_PAR_MS) -> RenderPlan:
    """Compile a validated, fitted tree into its event timeline.

    Pars play back to back, each starting where the previous ended. A
    media item with begin b and duration d inside a par of duration D
    runs over [min(b, D), min(b + d', D)) par-relative, where d' defaults
    to D - b; items whose clipped interval is empty emit nothing. Event
    count is exactly 2*pars + 2*live media + 1.
    """
    region_z = {r.id: r.z_index for r in tree.layout.regions}
    events: list[TimelineEvent] = []
    par_spans: list[tuple[int, int]] = []
    intervals: list[tuple[int, int, int, int, str | None, int]] = []

    clock = 0
    for pi, par in enumerate(tree.pars):
        dur = par_duration(par, default_par_ms)
        begin, end = clock, clock + dur
        par_spans.append((begin, end))
        events.append(TimelineEvent(begin, Action.PAR_BEGIN, pi))
        events.append(TimelineEvent(end, Action.PAR_END, pi))
        ranks = _z_ranks(par, region_z)
        for mi, item in enumerate(par.media):
            d = item.dur_ms if item.dur_ms is not None else dur - item.begin_ms
            start = begin + min(item.begin_ms, dur)
            stop = begin + min(item.begin_ms + d, dur)
            if stop <= start:
                continue
            z = ranks[mi]
            events.append(TimelineEvent(start, Action.START, pi, mi, item.region_id, z))
            events.append(TimelineEvent(stop, Action.STOP, pi, mi, item.region_id, z))
            intervals.append((start, stop, pi, mi, item.region_id, z))
        clock = end

    events.append(TimelineEvent(clock, Action.MESSAGE_END, len(tree.pars)))
    events.sort(key=lambda e: (e.at_ms, _ACTION_RANK[e.action], e.par_index,
                               -1 if e.media_index is None else e.media_index))
    return RenderPlan(events=events, total_ms=clock, par_spans=par_spans,
                      media_intervals=intervals)


def active_set(plan: RenderPlan, t_ms: int) -> set[tuple[int, int, str | None, int]]:
    """Media live at instant t: (par, media, region, z), half-open intervals.

    z gives paint order, higher on top. Raises RangeError outside
    [0, total_ms); an empty message accepts no instant at all.
    """
    if t_ms < 0 or t_ms >= plan.total_ms:
        raise RangeError(f"t={t_ms} outside [0, {plan.total_ms})")
    return {(par, media, region, z)
            for start, stop, par, media, region, z in plan.media_intervals
            if start <= t_ms < stop}


def plan_to_json(plan: RenderPlan) -> str:
    """The plan as a JSON event array; byte-identical for identical trees."""
    rows = []
    for e in plan.events:
        row: dict = {"at_ms": e.at_ms, "action": e.action.value, "par": e.par_index}
        if e.media_index is not None:
            row["media"] = e.media_index
            row["region"] = e.region_id
            row["z"] = e.z
        rows.append(row)
    return json.dumps(rows, indent=2)


class Mode(str, Enum):
    STOPPED = "stopped"
    PLAYING = "playing"
    PAUSED = "paused"


class Control(str, Enum):
    PLAY = "play"
    PAUSE = "pause"
    STOP = "stop"
    REWIND = "rewind"
    NEXT = "next"


@dataclass(frozen=True)
class PlayerState:
    mode: Mode
    position_ms: int
    current_par: int


def par_index_at(plan: RenderPlan, position_ms: int) -> int:
    """Index of the par containing a position; the last par at total_ms."""
    for i, (begin, end) in enumerate(plan.par_spans):
        if begin <= position_ms < end:
            return i
    return max(len(plan.par_spans) - 1, 0)


def initial_state(plan: RenderPlan) -> PlayerState:
    return PlayerState(Mode.STOPPED, 0, 0)


def _at(plan: RenderPlan, mode: Mode, position: int) -> PlayerState:
    if position >= plan.total_ms:
        position = plan.total_ms
        if mode is Mode.PLAYING:
            mode = Mode.STOPPED
    return PlayerState(mode, position, par_index_at(plan, position))


def control(state: PlayerState, plan: RenderPlan, command: Control | None = None,
            wall_elapsed_ms: int = 0) -> PlayerState:
    """Advance the virtual clock, then apply one control input.

    While playing, position advances by the caller-supplied elapsed wall
    time (reaching the end stops playback). Every input is legal in
    every mode; meaningless ones are no-ops. Rewind returns to the start
    of the current par, or the previous par when already exactly there;
    next jumps to the following par, or stops at the end from the last.
    """
    mode, position = state.mode, state.position_ms
    if mode is Mode.PLAYING and wall_elapsed_ms > 0:
        position = min(position + wall_elapsed_ms, plan.total_ms)
        if position >= plan.total_ms:
            mode = Mode.STOPPED
    if command is None:
        return _at(plan, mode, position)

    if command is Control.PLAY:
        if mode is Mode.STOPPED:
            return _at(plan, Mode.PLAYING, 0)
        if mode is Mode.PAUSED:
            return _at(plan, Mode.PLAYING, position)
        return _at(plan, mode, position)
    if command is Control.PAUSE:
        if mode is Mode.PLAYING:
            return _at(plan, Mode.PAUSED, position)
        return _at(plan, mode, position)
    if command is Control.STOP:
        return PlayerState(Mode.STOPPED, 0, par_index_at(plan, 0))
    if command is Control.REWIND:
        if not plan.par_spans:
            return _at(plan, mode, 0)
        current = par_index_at(plan, position)
        target = current
        if position == plan.par_spans[current][0] and current > 0:
            target = current - 1
        return _at(plan, mode, plan.par_spans[target][0])
    if command is Control.NEXT:
        if not plan.par_spans:
            return PlayerState(Mode.STOPPED, plan.total_ms, 0)
        current = par_index_at(plan, position)
        if current + 1 >= len(plan.par_spans) or position >= plan.total_ms:
            return PlayerState(Mode.STOPPED, plan.total_ms,
                               par_index_at(plan, plan.total_ms))
        return _at(plan, mode, plan.par_spans[current + 1][0])
    return _at(plan, mode, position)
