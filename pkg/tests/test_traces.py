import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stlcalib.errors import DatasetError
from stlcalib.traces import (
    ConfidenceTrace,
    Dataset,
    SynthConfig,
    parse_dataset,
    profile_base,
    serialize_dataset,
    split_dataset,
    summarize,
    synthesize,
)

FIXTURE = '{"id":"q1","steps":[0.9,0.3,0.8],"correct":false,"source":"logit","split":"test"}\n'


def test_parse_single_line():
    d = parse_dataset(FIXTURE.encode(), "jsonl")
    assert len(d) == 1
    t = d.traces[0]
    assert t.steps == (0.9, 0.3, 0.8)
    assert len(t) == 3
    assert t.correct is False and t.source == "logit" and t.split == "test"


def test_split_defaults_to_test():
    d = parse_dataset('{"id":"a","steps":[0.5],"correct":true,"source":"internal"}')
    assert d.traces[0].split == "test"


def test_out_of_range_reports_line():
    with pytest.raises(DatasetError, match="confidence out of range at line 1"):
        parse_dataset('{"id":"q1","steps":[1.2],"correct":true,"source":"logit"}')


def test_duplicate_id_named():
    text = FIXTURE + FIXTURE
    with pytest.raises(DatasetError, match="duplicate id 'q1'"):
        parse_dataset(text)


@pytest.mark.parametrize(
    "line, match",
    [
        ('{"id":"q1","steps":[],"correct":true,"source":"logit"}', "empty steps list at line 1"),
        ('{"id":"q1","steps":[0.5],"source":"logit"}', "missing field 'correct'"),
        ('{"id":"q1","steps":[0.5],"correct":"yes","source":"logit"}', "field 'correct'"),
        ('{"id":"q1","steps":[0.5],"correct":true,"source":"oracle"}', "field 'source'"),
        ('{"id":"q1","steps":[0.5],"correct":true,"source":"logit","split":"dev"}', "field 'split'"),
        ('{"id":"q1","steps":["a"],"correct":true,"source":"logit"}', "field 'steps'"),
        ('{"id":"q1","steps":[NaN],"correct":true,"source":"logit"}', "out of range"),
        ("[1, 2]", "expected a JSON object"),
        ("{not json", "malformed record at line 1"),
    ],
)
def test_malformed_records(line, match):
    with pytest.raises(DatasetError, match=match):
        parse_dataset(line)


def test_error_line_number_skips_blank_lines():
    text = FIXTURE + "\n" + '{"id":"q2","steps":[-0.1],"correct":true,"source":"logit"}\n'
    with pytest.raises(DatasetError, match="at line 3"):
        parse_dataset(text)


def test_non_utf8_rejected():
    with pytest.raises(DatasetError, match="UTF-8"):
        parse_dataset(b"\xff\xfe")


def test_csv_import():
    text = (
        "id,step_index,confidence,correct,source,split\n"
        "a,1,0.2,true,logit,test\n"
        "a,2,0.9,true,logit,test\n"
        "b,1,0.7,false,self_eval,validation\n"
    )
    d = parse_dataset(text, "csv")
    assert [t.id for t in d] == ["a", "b"]
    assert d.traces[0].steps == (0.2, 0.9)
    assert d.traces[1].split == "validation" and d.traces[1].source == "self_eval"


@pytest.mark.parametrize(
    "rows, match",
    [
        ("a,1,0.2,true,logit,test\na,3,0.9,true,logit,test\n", "step_index"),
        ("a,1,0.2,true,logit,test\nb,1,0.2,true,logit,test\na,2,0.9,true,logit,test\n", "contiguous"),
        ("a,1,1.5,true,logit,test\n", "out of range at line 2"),
        ("a,1,0.5,true,logit,test\na,2,0.5,false,logit,test\n", "differs"),
    ],
)
def test_csv_errors(rows, match):
    with pytest.raises(DatasetError, match=match):
        parse_dataset("id,step_index,confidence,correct,source,split\n" + rows, "csv")


def test_csv_bad_header():
    with pytest.raises(DatasetError, match="header"):
        parse_dataset("id,conf\n", "csv")


def test_trace_invariants_enforced_on_construction():
    with pytest.raises(DatasetError):
        ConfidenceTrace("x", (), True)
    with pytest.raises(DatasetError):
        ConfidenceTrace("x", (0.5, float("inf")), True)
    with pytest.raises(DatasetError, match="duplicate"):
        Dataset([ConfidenceTrace("x", (0.5,), True), ConfidenceTrace("x", (0.6,), False)])


def test_metadata_header_roundtrip():
    d = Dataset([ConfidenceTrace("x", (0.5,), True)], {"seed": 3})
    text = serialize_dataset(d)
    assert json.loads(text.splitlines()[0]) == {"_meta": {"seed": 3}}
    assert parse_dataset(text) == d


traces_st = st.lists(
    st.tuples(
        st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=8),
        st.booleans(),
        st.sampled_from(["logit", "self_eval", "internal"]),
        st.sampled_from(["train", "validation", "test"]),
    ),
    max_size=12,
)


@given(traces_st)
@settings(max_examples=200)
def test_parse_serialize_roundtrip(rows):
    d = Dataset([ConfidenceTrace(f"t{i}", tuple(s), c, src, sp) for i, (s, c, src, sp) in enumerate(rows)])
    assert parse_dataset(serialize_dataset(d, "jsonl"), "jsonl") == d
    assert parse_dataset(serialize_dataset(d, "csv"), "csv") == d


def _ten():
    return Dataset([ConfidenceTrace(f"t{i}", (0.5,), i % 2 == 0) for i in range(10)])


def test_split_counts():
    s = split_dataset(_ten(), 0.2, seed=7)
    assert sum(t.split == "validation" for t in s) == 2
    assert sum(t.split == "test" for t in s) == 8


def test_split_deterministic_and_preserves_traces():
    a = split_dataset(_ten(), 0.2, seed=7)
    b = split_dataset(_ten(), 0.2, seed=7)
    assert a == b
    strip = lambda d: sorted((t.id, t.steps, t.correct, t.source) for t in d)
    assert strip(a) == strip(_ten())


def test_split_ignores_input_order():
    d = _ten()
    rev = Dataset(tuple(reversed(d.traces)))
    val = lambda x: {t.id for t in split_dataset(x, 0.3, 11) if t.split == "validation"}
    assert val(d) == val(rev)


def test_split_empty_partition():
    one = Dataset([ConfidenceTrace("a", (0.5,), True)])
    with pytest.raises(DatasetError, match="empty"):
        split_dataset(one, 0.5, seed=0)
    with pytest.raises(DatasetError):
        split_dataset(_ten(), 0.0, seed=0)


def test_synth_exact_accuracy():
    d = synthesize(SynthConfig(count=100, accuracy=0.7, seed=1))
    assert sum(t.correct for t in d) == 70
    assert len(d) == 100


def test_synth_flat_high_zero_noise():
    d = synthesize(SynthConfig(count=20, accuracy=1.0, correct_profile="flat_high", noise_sd=0.0, seed=5))
    assert all(set(t.steps) == {0.9} for t in d)


def test_synth_reproducible_bytes():
    cfg = SynthConfig(count=50, seed=9, noise_sd=0.1)
    assert serialize_dataset(synthesize(cfg)) == serialize_dataset(synthesize(cfg))
    other = SynthConfig(count=50, seed=10, noise_sd=0.1)
    assert serialize_dataset(synthesize(cfg)) != serialize_dataset(synthesize(other))


@pytest.mark.parametrize("cfg", [SynthConfig(count=0), SynthConfig(min_steps=5, max_steps=2)])
def test_synth_rejects_bad_config(cfg):
    with pytest.raises(DatasetError):
        synthesize(cfg)


@given(
    st.integers(1, 40),
    st.integers(1, 6),
    st.integers(0, 6),
    st.floats(0, 1),
    st.sampled_from(["rising", "flat_high", "spiky", "collapsing"]),
    st.floats(0, 0.5),
    st.integers(0, 2**32 - 1),
)
@settings(max_examples=100)
def test_synth_output_parses(count, lo, extra, acc, profile, sd, seed):
    cfg = SynthConfig(count, lo, lo + extra, acc, profile, "spiky", sd, seed)
    d = synthesize(cfg)
    assert parse_dataset(serialize_dataset(d)) == d
    assert all(lo <= len(t) <= lo + extra for t in d)


def test_profiles():
    assert profile_base("rising", 3).tolist() == pytest.approx([0.3, 0.6, 0.9])
    assert profile_base("collapsing", 3).tolist() == pytest.approx([0.9, 0.6, 0.3])
    assert profile_base("spiky", 4).tolist() == [0.3, 0.9, 0.3, 0.9]


def test_summary():
    assert summarize(parse_dataset(FIXTURE)) == "1 trace, T∈[3,3], sources: logit"
