import io
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from synodsim.fam import Path
from synodsim.scenario import load_canned
from synodsim.scheduler import run
from synodsim.trace import (TraceFormatError, digest, read_trace, replay,
                            trace_text)

from conftest import initial


@pytest.fixture(scope="module")
def cnd_trace():
    return trace_text(run(load_canned("cnd")))


def parse(text):
    return read_trace(io.StringIO(text))


def test_round_trip_reproduces_path(cnd_trace):
    path = run(load_canned("cnd"))
    result = replay(parse(cnd_trace))
    assert result.ok and result.steps_checked == len(path)
    assert result.path == path
    assert trace_text(result.path) == cnd_trace


def test_digest_is_stable_and_distinguishes():
    c = initial()
    assert digest(c) == digest(initial())
    assert len(digest(c)) == 16
    assert digest(c) != digest(initial(1, 4))


def _flip_ballot(text, index):
    lines = text.split("\n")
    for n, line in enumerate(lines):
        f = line.split("\t")
        if f[0] == str(index):
            parts = f[3].split("|")
            parts[3] = str(int(parts[3]) + 1)
            f[3] = "|".join(parts)
            lines[n] = "\t".join(f)
            return "\n".join(lines)
    raise AssertionError("no such record")


def test_flipped_ballot_diverges_at_that_index(cnd_trace):
    records = parse(cnd_trace).records
    k = next(r.index for r in records if r.step.message is not None and r.index > 5)
    result = replay(parse(_flip_ballot(cnd_trace, k)))
    assert not result.ok and result.divergent_index == k


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_every_prefix_replays(data):
    text = trace_text(run(replace(load_canned("single"), seed=data.draw(st.integers(0, 50)))))
    cut = data.draw(st.integers(0, len(text)))
    header_end = text.index("\n", text.index("\ninit\t") + 1) + 1
    if cut < header_end:
        with pytest.raises(TraceFormatError):
            parse(text[:cut])
        return
    assert replay(parse(text[:cut])).ok


def test_version_mismatch_rejected(cnd_trace):
    with pytest.raises(TraceFormatError):
        parse(cnd_trace.replace("synodsim-trace 1", "synodsim-trace 2", 1))


def test_out_of_order_index_rejected(cnd_trace):
    lines = cnd_trace.split("\n")
    i = next(n for n, l in enumerate(lines) if l.startswith("3\t"))
    lines[i] = "7" + lines[i][1:]
    with pytest.raises(TraceFormatError) as e:
        parse("\n".join(lines))
    assert e.value.line == i + 1


def test_only_fresh_initial_configurations_serialize():
    path = run(load_canned("single"))
    with pytest.raises(ValueError):
        trace_text(Path(path.last(), ()))
