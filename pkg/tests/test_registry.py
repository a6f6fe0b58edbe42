import json
import multiprocessing
import os

import pytest

from psc.errors import (
    IOFailure,
    KeyNotFound,
    OutOfRange,
    ParseError,
    SpecMismatch,
    UnsupportedFormat,
    ValidationError,
)
from psc.model import ComparisonSpec, FixedMetric, MetricKind, RunContext
from psc.registry import (
    Provenance,
    RegistryEntry,
    RegistryKey,
    content_hash,
    format_for,
    load_entries,
    parse_records,
    read_report,
    registry_add,
    registry_compare,
    registry_list,
    serialize_records,
    spec_digest,
    write_report,
)
from psc.simgen import Logistic, generate_runs, linspace

from conftest import CTX, rec

SPEC = ComparisonSpec(MetricKind.L2, MetricKind.ASR, (0, 3), 20, 5)
XS = linspace(0, 3, 61)


def runs(method, midpoint, context=CTX):
    return generate_runs(Logistic(3.0, midpoint), method, [("p0", 0.0)], XS, context=context)


def entry(method, midpoint, spec=SPEC, stamp=0):
    return RegistryEntry(RegistryKey.for_spec(CTX, spec), method, runs(method, midpoint),
                         Provenance("tester", stamp))


def sample_records():
    return [
        rec("MIA", "ps3", l2=0.6, asr=92.0),
        rec("MIA", "ps4", l2=1.25, asr=97.5, queries=40),
        rec("FGSM", "eps=0.3", l2=2.0, asr=100.0, linf=0.3),
        rec("odd,name", 'quote"d', l2=0.1, asr=0.0),
    ]


@pytest.mark.parametrize("fmt", ["jsonl", "csv"])
def test_round_trip(fmt):
    records = sample_records()
    assert parse_records(serialize_records(records, fmt), fmt) == records


@pytest.mark.parametrize("fmt", ["jsonl", "csv"])
def test_round_trip_keeps_float_bits(fmt):
    records = [rec(l2=0.1 + 0.2, asr=100 / 3)]
    back = parse_records(serialize_records(records, fmt), fmt)[0]
    assert back.measurements[MetricKind.L2] == 0.1 + 0.2
    assert back.measurements[MetricKind.ASR] == 100 / 3


def test_self_describing_csv_row():
    text = ("method,param_set,dataset,model,mode,attack_family,x,y\n"
            "MIA,ps3,mnist,cnn4,untargeted,gradient,l2_distance=0.6,asr=92.0\n")
    (r,) = parse_records(text, "csv")
    assert (r.method, r.param_set, r.context) == ("MIA", "ps3", CTX)
    assert r.measurements == {MetricKind.L2: 0.6, MetricKind.ASR: 92.0}


def test_unknown_columns_become_meta():
    text = ("method,param_set,dataset,model,mode,attack_family,l2,asr,seed\n"
            "MIA,ps3,mnist,cnn4,untargeted,gradient,0.6,92,7\n")
    (r,) = parse_records(text, "csv")
    assert r.meta == {"seed": "7"}


@pytest.mark.parametrize("fmt", ["jsonl", "csv"])
def test_empty_stream(fmt):
    assert parse_records("", fmt) == []
    assert parse_records(b"", fmt) == []


def test_bom_is_ignored():
    text = "\ufeff" + serialize_records(sample_records(), "csv")
    assert parse_records(text.encode("utf-8"), "csv") == sample_records()


def test_out_of_range_reports_line():
    good = serialize_records([rec(l2=1.0, asr=50.0)], "jsonl")
    bad = good.replace('"asr": 50.0', '"asr": 120.0')
    with pytest.raises(OutOfRange) as err:
        parse_records(good + good + bad, "jsonl")
    assert err.value.details["line"] == 3
    assert isinstance(err.value, ValidationError)


def test_csv_out_of_range_reports_line():
    text = ("method,param_set,dataset,model,mode,attack_family,l2,asr\n"
            "a,p,mnist,cnn4,untargeted,gradient,0.5,40\n"
            "a,p,mnist,cnn4,untargeted,gradient,0.5,120\n")
    with pytest.raises(OutOfRange) as err:
        parse_records(text, "csv")
    assert err.value.details["line"] == 3


def test_malformed_json_reports_position():
    with pytest.raises(ParseError) as err:
        parse_records(serialize_records([rec(l2=1.0, asr=5.0)]) + '{oops\n', "jsonl")
    assert err.value.details["line"] == 2


def test_csv_header_must_name_identity_columns():
    with pytest.raises(ParseError):
        parse_records("method,l2,asr\na,1,2\n", "csv")


def test_format_inference():
    assert format_for("runs.csv") == "csv"
    assert format_for("runs.jsonl") == "jsonl"
    with pytest.raises(UnsupportedFormat):
        format_for("runs.xlsx")


def test_digest_ignores_number_spelling_and_field_order():
    a = ComparisonSpec(MetricKind.L2, MetricKind.ASR, (0, 3), 20, 5)
    b = ComparisonSpec.from_dict({**dict(reversed(list(a.to_dict().items()))), "range": [0.0, 3.0]})
    assert spec_digest(a) == spec_digest(b)
    assert len(spec_digest(a)) == 16


def test_digest_separates_specs():
    base = spec_digest(SPEC)
    others = [
        ComparisonSpec(MetricKind.L2, MetricKind.ASR, (0, 3), 10, 5),
        ComparisonSpec(MetricKind.L2, MetricKind.ASR, (0, 3), 20, 4),
        ComparisonSpec(MetricKind.L2, MetricKind.ASR, (0, 2), 20, 5),
        ComparisonSpec(MetricKind.L2, MetricKind.ASR, (0, 3), 20, 5, FixedMetric(MetricKind.QUERIES, 100, 0)),
    ]
    assert len({base} | {spec_digest(s) for s in others}) == 5


def test_add_then_list(tmp_path):
    path = registry_add(tmp_path, entry("A", 1.0), SPEC)
    (listed,) = registry_list(tmp_path)
    assert listed.method == "A"
    assert listed.key == RegistryKey.for_spec(CTX, SPEC)
    assert listed.records == len(XS)
    assert listed.content_hash == content_hash(path)
    assert listed.provenance.submitter == "tester"
    assert oct(path.stat().st_mode & 0o777) == "0o644"


def test_list_empty_or_missing_root(tmp_path):
    assert registry_list(tmp_path) == []
    assert registry_list(tmp_path / "absent") == []


def test_add_needs_existing_root(tmp_path):
    with pytest.raises(IOFailure):
        registry_add(tmp_path / "absent", entry("A", 1.0), SPEC)


def test_readd_archives_previous(tmp_path):
    first = registry_add(tmp_path, entry("A", 1.0, stamp=1), SPEC, clock=lambda: 100)
    old = first.read_bytes()
    registry_add(tmp_path, entry("A", 1.2, stamp=2), SPEC, clock=lambda: 200)
    directory = first.parent
    assert sorted(p.name for p in directory.glob("*.jsonl")) == ["A.jsonl"]
    (archived,) = (directory / "_archive").iterdir()
    assert archived.read_bytes() == old
    (listed,) = registry_list(tmp_path)
    assert listed.provenance.timestamp == 2


def test_entry_rejects_foreign_context():
    other = RunContext("cifar10", "cnn4", "untargeted", "gradient")
    with pytest.raises(SpecMismatch):
        RegistryEntry(RegistryKey.for_spec(CTX, SPEC), "A", runs("A", 1.0, other))


def test_add_rejects_spec_not_matching_key(tmp_path):
    other = ComparisonSpec(MetricKind.L2, MetricKind.ASR, (0, 3), 10, 5)
    with pytest.raises(SpecMismatch):
        registry_add(tmp_path, entry("A", 1.0), other)


def test_failed_publish_keeps_previous_entry(tmp_path, monkeypatch):
    live = registry_add(tmp_path, entry("A", 1.0), SPEC)
    before = live.read_bytes()
    real_replace = os.replace

    def failing(src, dst, *a, **kw):
        if os.path.basename(src).startswith(".tmp-"):
            raise OSError(28, "No space left on device")
        return real_replace(src, dst, *a, **kw)

    monkeypatch.setattr(os, "replace", failing)
    with pytest.raises(IOFailure):
        registry_add(tmp_path, entry("A", 1.4), SPEC)
    monkeypatch.undo()
    assert live.read_bytes() == before
    assert not [p for p in live.parent.iterdir() if p.name.startswith(".tmp-")]
    assert len(load_entries(tmp_path, RegistryKey.for_spec(CTX, SPEC))["A"]) == len(XS)


def test_failed_first_publish_leaves_nothing(tmp_path, monkeypatch):
    def failing(src, dst, *a, **kw):
        raise OSError(5, "I/O error")

    monkeypatch.setattr(os, "replace", failing)
    with pytest.raises(IOFailure):
        registry_add(tmp_path, entry("A", 1.0), SPEC)
    monkeypatch.undo()
    assert registry_list(tmp_path) == []


def _writer(args):
    root, method, n = args
    for i in range(n):
        registry_add(root, entry(method, 1.0 + 0.01 * i, stamp=i), SPEC, clock=lambda: 0)


def test_concurrent_writers(tmp_path):
    methods = ["A", "B", "C", "D"]
    with multiprocessing.get_context("spawn").Pool(4) as pool:
        pool.map(_writer, [(str(tmp_path), m, 3) for m in methods] + [(str(tmp_path), "A", 3)])
    listed = registry_list(tmp_path)
    assert sorted(e.method for e in listed) == methods
    assert all(e.records == len(XS) for e in listed)
    directory = RegistryKey.for_spec(CTX, SPEC).directory(tmp_path)
    archived = list((directory / "_archive").iterdir())
    assert len(archived) == 15 - 4
    for path in archived:
        lines = path.read_text().splitlines()
        assert "__entry__" in json.loads(lines[0])
        assert len(lines) == len(XS) + 1


def test_compare_against_baselines(tmp_path):
    for method, mid in [("A", 1.0), ("B", 1.3), ("C", 1.6)]:
        registry_add(tmp_path, entry(method, mid), SPEC)
    key = RegistryKey.for_spec(CTX, SPEC)
    report = registry_compare(tmp_path, key, runs("U", 0.8), "U")
    assert [e.method for e in report.entries] == ["U", "A", "B", "C"]
    assert [e.rank for e in report.entries] == [1, 2, 3, 4]
    assert report.advisories == ()


def test_compare_replaces_stored_copy_of_upload(tmp_path):
    registry_add(tmp_path, entry("A", 1.0), SPEC)
    registry_add(tmp_path, entry("U", 2.5), SPEC)
    report = registry_compare(tmp_path, RegistryKey.for_spec(CTX, SPEC), runs("U", 0.5), "U")
    assert report.entries[0].method == "U"


def test_compare_rejects_other_context(tmp_path):
    registry_add(tmp_path, entry("A", 1.0), SPEC)
    other = RunContext("cifar10", "cnn4", "untargeted", "gradient")
    with pytest.raises(SpecMismatch):
        registry_compare(tmp_path, RegistryKey.for_spec(CTX, SPEC), runs("U", 1.0, other), "U")


def test_compare_empty_registry_degrades(tmp_path):
    report = registry_compare(tmp_path, RegistryKey.for_spec(CTX, SPEC), runs("U", 1.0), "U", spec=SPEC)
    assert [e.method for e in report.entries] == ["U"]
    assert len(report.advisories) == 1 and "no stored baselines" in report.advisories[0]


def test_compare_empty_registry_without_spec(tmp_path):
    with pytest.raises(KeyNotFound):
        registry_compare(tmp_path, RegistryKey.for_spec(CTX, SPEC), runs("U", 1.0), "U")


def test_compare_upload_lacking_method(tmp_path):
    with pytest.raises(KeyNotFound):
        registry_compare(tmp_path, RegistryKey.for_spec(CTX, SPEC), runs("U", 1.0), "V", spec=SPEC)


def test_report_file_round_trip(tmp_path):
    registry_add(tmp_path, entry("A", 1.0), SPEC)
    report = registry_compare(tmp_path, RegistryKey.for_spec(CTX, SPEC), runs("U", 0.8), "U")
    write_report(report, tmp_path / "out" / "report.json")
    back = read_report(tmp_path / "out" / "report.json")
    assert back.to_json() == report.to_json()


def test_read_report_errors(tmp_path):
    with pytest.raises(IOFailure):
        read_report(tmp_path / "none.json")
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(ParseError):
        read_report(tmp_path / "bad.json")
