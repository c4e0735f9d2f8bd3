"""Line-delimited trace format and state digests.

A trace file looks like::

    synodsim-trace 1
    actor	P1	proposer	v-P1	2	0
    actor	A1	acceptor
    init	9c1f0e7a3b2d4c55
    0	Prp	P1	2|A1,A2	4a0b...
    1	Snd	P1	1a|P1|A1|2|||	77e1...

Fields are tab-separated.  Message fields are
``kind|sender|receiver|ballot|value|prior_ballot|prior_value`` with empty
strings for absent parts.  The last field of every step record is the
digest of the configuration reached by that step.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from typing import Iterable, Optional, TextIO

from .fam import Configuration, NotEnabled, Path, StepKind, TransitionStep, apply
from .synod import (AcceptorState, ActorName, Kind, Message, ProposerState, Role,
                    fresh_state)

TRACE_HEADER = "synodsim-trace"
FORMAT_VERSION = "1"


class TraceFormatError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


def _accepted(pair) -> str:
    return "" if pair is None else f"{pair[0]}:{pair[1]}"


def encode_message(m: Message) -> str:
    pb, pv = ("", "") if m.prior is None else (str(m.prior[0]), m.prior[1])
    return "|".join((m.kind.value, m.sender.id, m.receiver.id, str(m.ballot),
                     m.value, pb, pv))


def _bag(messages) -> str:
    return ",".join(encode_message(m) for m in messages)


def _state_text(state) -> str:
    if isinstance(state, AcceptorState):
        return ";".join(("acc", state.name.id, str(state.highest_seen),
                         _accepted(state.accepted),
                         _bag(sorted(state.unresponded, key=Message.sort_key)),
                         _bag(state.outbox)))
    return ";".join(("prp", state.name.id, state.own_value,
                     f"{state.ballot_stride}/{state.ballot_offset}",
                     str(state.current_ballot),
                     ",".join(sorted(a.id for a in state.target_quorum)),
                     _bag(state.promises), _bag(state.votes),
                     _accepted(state.learned), _bag(state.outbox)))


def canonical(config: Configuration) -> str:
    lines = [f"up {_state_text(s)}" for s in config.available.values()]
    lines += [f"down {_state_text(s)}" for s in config.failed.values()]
    lines += [f"mu {encode_message(m)}" for m in config.in_flight]
    return "\n".join(lines)


def digest(config: Configuration) -> str:
    """Stable 64-bit hash of the canonical serialization, as 16 hex digits."""
    return hashlib.blake2b(canonical(config).encode(), digest_size=8).hexdigest()


@dataclass(frozen=True)
class RosterEntry:
    name: ActorName
    value: Optional[str] = None
    stride: int = 1
    offset: int = 0


def initial_configuration(roster: Iterable[RosterEntry]) -> Configuration:
    states = {}
    for e in roster:
        states[e.name] = fresh_state(e.name, value=e.value, stride=e.stride,
                                     offset=e.offset)
    return Configuration.of(states)


def roster_of(config: Configuration) -> list[RosterEntry]:
    out = []
    for name, state in config.states():
        if isinstance(state, ProposerState):
            out.append(RosterEntry(name, state.own_value, state.ballot_stride,
                                   state.ballot_offset))
        else:
            out.append(RosterEntry(name))
    return out


def encode_step(step: TransitionStep) -> str:
    if step.kind in (StepKind.SND, StepKind.RCV):
        payload = encode_message(step.message)
    elif step.kind is StepKind.PRP:
        payload = f"{step.ballot}|" + ",".join(sorted(a.id for a in step.quorum))
    else:
        payload = "-"
    return f"{step.kind.value}\t{step.actor.id}\t{payload}"


def write_trace(path: Path, out: TextIO) -> None:
    roster = roster_of(path.initial)
    if initial_configuration(roster) != path.initial:
        raise ValueError("only paths from a fresh, fully available roster serialize")
    out.write(f"{TRACE_HEADER} {FORMAT_VERSION}\n")
    for e in roster:
        if e.name.role is Role.PROPOSER:
            out.write(f"actor\t{e.name.id}\tproposer\t{e.value}\t{e.stride}\t{e.offset}\n")
        else:
            out.write(f"actor\t{e.name.id}\tacceptor\n")
    out.write(f"init\t{digest(path.initial)}\n")
    for i, (step, config) in enumerate(path.steps):
        out.write(f"{i}\t{encode_step(step)}\t{digest(config)}\n")


def trace_text(path: Path) -> str:
    buf = io.StringIO()
    write_trace(path, buf)
    return buf.getvalue()


@dataclass
class TraceRecord:
    index: int
    step: TransitionStep
    digest: str
    line: int


@dataclass
class ParsedTrace:
    roster: list[RosterEntry]
    initial_digest: str
    records: list[TraceRecord]

    def initial(self) -> Configuration:
        return initial_configuration(self.roster)


def _decode_message(text: str, names: dict[str, ActorName], line: int) -> Message:
    parts = text.split("|")
    if len(parts) != 7:
        raise TraceFormatError(line, f"message needs 7 fields, got {len(parts)}")
    kind, s, r, b, v, pb, pv = parts
    try:
        prior = None if pb == "" else (int(pb), pv)
        return Message(Kind(kind), names[s], names[r], int(b), v, prior)
    except KeyError as e:
        raise TraceFormatError(line, f"unknown actor {e.args[0]}") from None
    except ValueError as e:
        raise TraceFormatError(line, str(e)) from None


def decode_step(fields: list[str], names: dict[str, ActorName], line: int) -> TransitionStep:
    kind_s, actor_s, payload = fields
    try:
        kind = StepKind(kind_s)
        actor = names[actor_s]
    except ValueError:
        raise TraceFormatError(line, f"unknown step kind {kind_s!r}") from None
    except KeyError:
        raise TraceFormatError(line, f"unknown actor {actor_s!r}") from None
    try:
        if kind in (StepKind.SND, StepKind.RCV):
            return TransitionStep(kind, actor, _decode_message(payload, names, line))
        if kind is StepKind.PRP:
            b, q = payload.split("|")
            return TransitionStep.prp(actor, int(b), [names[x] for x in q.split(",") if x])
        return TransitionStep(kind, actor)
    except TraceFormatError:
        raise
    except (ValueError, KeyError) as e:
        raise TraceFormatError(line, f"bad step payload: {e}") from None


def read_trace(src: TextIO) -> ParsedTrace:
    text = src.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    elif lines:
        # A final line without newline is a truncated write; drop it.
        lines.pop()
    if not lines or lines[0].split(" ") != [TRACE_HEADER, FORMAT_VERSION]:
        raise TraceFormatError(1, f"expected header '{TRACE_HEADER} {FORMAT_VERSION}'")
    roster: list[RosterEntry] = []
    names: dict[str, ActorName] = {}
    init = None
    records = []
    for n, raw in enumerate(lines[1:], start=2):
        fields = raw.split("\t")
        if fields[0] == "actor":
            try:
                if fields[2] == "proposer":
                    _, ident, _, value, stride, offset = fields
                    e = RosterEntry(ActorName(ident, Role.PROPOSER), value,
                                    int(stride), int(offset))
                else:
                    _, ident, _ = fields
                    e = RosterEntry(ActorName(ident, Role(fields[2])))
            except (ValueError, IndexError) as exc:
                raise TraceFormatError(n, f"bad actor record: {exc}") from None
            roster.append(e)
            names[e.name.id] = e.name
        elif fields[0] == "init":
            init = fields[1]
        else:
            if len(fields) != 5:
                raise TraceFormatError(n, "step record needs 5 fields")
            try:
                index = int(fields[0])
            except ValueError:
                raise TraceFormatError(n, f"bad index {fields[0]!r}") from None
            if index != len(records):
                raise TraceFormatError(n, f"expected index {len(records)}, got {index}")
            records.append(TraceRecord(index, decode_step(fields[1:4], names, n),
                                       fields[4], n))
    if init is None:
        raise TraceFormatError(len(lines), "missing init record")
    return ParsedTrace(roster, init, records)


@dataclass
class ReplayResult:
    ok: bool
    steps_checked: int
    divergent_index: Optional[int] = None
    reason: str = ""
    path: Optional[Path] = None


def replay(trace: ParsedTrace) -> ReplayResult:
    """Re-apply every recorded step and compare post-state digests."""
    config = trace.initial()
    if digest(config) != trace.initial_digest:
        return ReplayResult(False, 0, -1, "initial configuration digest differs")
    steps = []
    for rec in trace.records:
        try:
            config = apply(config, rec.step)
        except NotEnabled as e:
            return ReplayResult(False, rec.index, rec.index, str(e))
        if digest(config) != rec.digest:
            return ReplayResult(False, rec.index, rec.index, "state digest differs")
        steps.append((rec.step, config))
    return ReplayResult(True, len(trace.records), path=Path(trace.initial(), steps))
