import pytest

from nepcap.corpus import build_vocab
from nepcap.errors import ConfigError, GridError
from nepcap.frames import FeatureTensor, save_features
from nepcap.harness import GridSpec, RunRecord, load_baselines, load_records, render_report, run_grid, run_label
from nepcap.harness.report import BASELINE_NOTE
from nepcap.metrics import EvalReport
from nepcap.toy import toy_features, toy_records


@pytest.fixture(scope="module")
def toy_cache(tmp_path_factory):
    root = tmp_path_factory.mktemp("cache")
    for vid, feats in toy_features().items():
        save_features(FeatureTensor(vid, "synthetic", feats), root)
    return root


def _record(label, b4, meteor, hidden=512, b1=50.0):
    rep = EvalReport({1: b1, 2: 40.0, 3: 30.0, 4: b4}, meteor, label)
    return RunRecord(label, "synthetic", "lstm", hidden, 4, 1, 0, "x.ckpt", rep, 1.0)


# -- GridSpec -------------------------------------------------------------------------------------


def test_grid_cross_product():
    spec = GridSpec("efficientnetb0,resnet101,vgg16", "lstm,gru,bilstm", "512,1024")
    assert len(spec.points()) == 18
    labels = {run_label(*p) for p in spec.points()}
    assert len(labels) == 18


def test_grid_from_kv():
    spec = GridSpec.from_kv({"backbones": "synthetic", "decoders": "gru", "hidden_dims": "512", "epochs": "15, 30"})
    assert spec.points() == [("synthetic", "gru", 512, 128, 15, 0), ("synthetic", "gru", 512, 128, 30, 0)]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"backbones": "", "decoders": "lstm", "hidden_dims": "512"},
        {"backbones": "inception", "decoders": "lstm", "hidden_dims": "512"},
        {"backbones": "synthetic", "decoders": "transformer", "hidden_dims": "512"},
    ],
)
def test_grid_validation(kwargs):
    with pytest.raises(ConfigError):
        GridSpec(**kwargs)
    with pytest.raises(ConfigError):
        GridSpec.from_kv({"backbones": "synthetic"})


def test_run_label():
    assert run_label("vgg16", "bilstm", 1024, 128, 30, 7) == "vgg16+bilstm-h1024-b128-e30-s7"


# -- run_grid with a stub trainer ---------------------------------------------------------------------


def _stub(fail_labels=(), calls=None):
    def run(point, records, vocab, features_root, out_dir, lr):
        label = run_label(*point)
        if calls is not None:
            calls.append(label)
        if label in fail_labels:
            raise RuntimeError(f"boom {label}")
        from nepcap.harness.grid import RECORD_FILE, _atomic_write
        from nepcap.kvdoc import format_kv

        rec = RunRecord(label, point[0], point[1], point[2], point[3], point[4], point[5], "c",
                        EvalReport({n: 10.0 * n for n in range(1, 5)}, 5.0, label), 0.0)
        (out_dir / label).mkdir(parents=True, exist_ok=True)
        _atomic_write(out_dir / label / RECORD_FILE, format_kv(rec.to_kv()))
        return rec

    return run


def test_run_grid_partial_failure_and_retry(tmp_path):
    spec = GridSpec("synthetic", "lstm,gru", "512")
    bad = run_label("synthetic", "gru", 512, 128, 30, 0)
    done = run_grid(spec, [], None, tmp_path, tmp_path / "runs", run_fn=_stub({bad}))
    assert [r.label for r in done] == [run_label("synthetic", "lstm", 512, 128, 30, 0)]
    assert "boom" in (tmp_path / "runs" / bad / "error.txt").read_text()
    calls = []
    done = run_grid(spec, [], None, tmp_path, tmp_path / "runs", run_fn=_stub(calls=calls))
    assert calls == [bad] and len(done) == 2


def test_run_grid_all_fail(tmp_path):
    spec = GridSpec("synthetic", "lstm", "512")
    with pytest.raises(GridError):
        run_grid(spec, [], None, tmp_path, tmp_path / "runs", run_fn=_stub({run_label(*spec.points()[0])}))


def test_run_grid_parallel_workers(tmp_path):
    spec = GridSpec("synthetic", "lstm,gru,bilstm", "512,1024")
    done = run_grid(spec, [], None, tmp_path, tmp_path / "runs", workers=3, run_fn=_stub())
    assert [r.label for r in done] == [run_label(*p) for p in spec.points()]
    assert len(load_records(tmp_path / "runs")) == 6


# -- real end-to-end grid ---------------------------------------------------------------------------


def _strip(records):
    return [{k: v for k, v in r.to_kv().items() if k != "wall_time"} for r in records]


def test_run_grid_real_and_resume(tmp_path, toy_cache):
    recs = toy_records()
    vocab = build_vocab(recs)
    spec = GridSpec("synthetic", "lstm,gru", "16", batch_sizes="8", epochs="2")
    full = run_grid(spec, recs, vocab, toy_cache, tmp_path / "a")
    assert len(full) == 2 and all(0 <= r.report.bleu[1] <= 100 for r in full)
    for r in full:
        assert (tmp_path / "a" / r.label / "best.ckpt").exists()
        assert (tmp_path / "a" / r.label / "final.ckpt").exists()

    # interrupted after the first run: only its record exists, the second run left a partial directory
    first = run_grid(GridSpec("synthetic", "lstm", "16", batch_sizes="8", epochs="2"), recs, vocab, toy_cache, tmp_path / "b")
    (tmp_path / "b" / full[1].label).mkdir()
    (tmp_path / "b" / full[1].label / "final.ckpt").write_bytes(b"partial")
    resumed = run_grid(spec, recs, vocab, toy_cache, tmp_path / "b")
    assert _strip(resumed) == _strip(full)
    assert _strip(resumed[:1]) == _strip(first)
    assert _strip(load_records(tmp_path / "b")) == _strip(sorted(full, key=lambda r: r.label))


# -- report ---------------------------------------------------------------------------------------------


def test_baselines_packaged():
    rows = {(b.model, b.hidden_dim): b for b in load_baselines()}
    assert len(rows) == 9
    b = rows[("EfficientNetB0 + LSTM", 512)]
    assert [b.bleu[n] for n in range(1, 5)] == [63, 40, 20, 14] and b.meteor == 47
    best = rows[("EfficientNetB0 + BiLSTM", 1024)]
    assert [best.bleu[n] for n in range(1, 5)] == [65, 41, 23, 17] and best.meteor == 46


def test_report_sorting_and_ties():
    recs = [_record("c", 10, 30), _record("a", 20, 10), _record("b", 10, 40), _record("d", 10, 30)]
    lines = render_report(recs).splitlines()
    assert lines[0].split()[:3] == ["Model", "Hidden", "dim."]
    order = [line.split()[-1] for line in lines[2:]]
    assert order == ["a", "b", "c", "d"]


def test_report_single_record_and_baselines():
    text = render_report([_record("only", 1, 2)], load_baselines())
    body = text.splitlines()[2:]
    assert len(body) == 10
    assert body[0].endswith("only")
    assert all(line.endswith(BASELINE_NOTE) for line in body[1:])
    assert "63.00   40.00   20.00   14.00   47.00" in body[1]


def test_report_deterministic():
    recs = [_record(str(i), i % 3, i % 2) for i in range(6)]
    a = render_report(recs, load_baselines())
    b = render_report(list(reversed(recs)), load_baselines())
    assert a == b and a.encode() == b.encode()
