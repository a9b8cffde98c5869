import json

import numpy as np
import pytest

from qtomo import io as qio
from qtomo.cli import SCHEMAS, build_parser, main
from qtomo.errors import FormatError, InvalidSpec
from qtomo.models.corrector import CorrectorModel
from qtomo.models.lstm import SelectorReconstructor
from qtomo.nn import ModelWeights
from qtomo.states import RandomStateConfig, generate_dataset, is_valid
from qtomo.sweep import read_sweep_csv


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)

    def _run(*args):
        return main([str(a) for a in args])

    return _run


# ------------------------------------------------------------------- formats


@pytest.mark.parametrize("n", [1, 2, 3])
def test_dataset_round_trip(tmp_path, n):
    states = generate_dataset(RandomStateConfig(n, 1), 7)
    qio.write_dataset(tmp_path / "d.qtds", states, n)
    back, n_back = qio.read_dataset(tmp_path / "d.qtds")
    assert n_back == n and back.tobytes() == states.tobytes()
    assert qio.dataset_bytes(back, n) == (tmp_path / "d.qtds").read_bytes()


def test_dataset_header_layout(tmp_path):
    states = generate_dataset(RandomStateConfig(1, 1), 3)
    raw = qio.dataset_bytes(states, 1)
    assert raw[:4] == b"QTDS"
    assert int.from_bytes(raw[4:8], "little") == 1
    assert int.from_bytes(raw[8:12], "little") == 1
    assert int.from_bytes(raw[12:20], "little") == 3
    assert len(raw) == 20 + 3 * 4 * 16 + 4
    assert np.frombuffer(raw[20:36], "<f8")[0] == states[0, 0, 0].real


def test_dataset_corruption_detected(tmp_path):
    raw = bytearray(qio.dataset_bytes(generate_dataset(RandomStateConfig(1, 1), 3), 1))
    raw[30] ^= 1
    (tmp_path / "bad.qtds").write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        qio.read_dataset(tmp_path / "bad.qtds")
    (tmp_path / "short.qtds").write_bytes(bytes(raw[:-9]))
    with pytest.raises(FormatError):
        qio.read_dataset(tmp_path / "short.qtds")
    (tmp_path / "junk.qtds").write_bytes(b"nope" * 8)
    with pytest.raises(FormatError):
        qio.read_dataset(tmp_path / "junk.qtds")


def test_checkpoint_round_trip(tmp_path, rng):
    w = ModelWeights({"a": (2, 3), "b": (4,)})
    w.flat[:] = rng.normal(size=len(w))
    qio.write_checkpoint(tmp_path / "c.qtnn", "CORR_M", w, {"x": 1})
    kind, back, meta = qio.read_checkpoint(tmp_path / "c.qtnn")
    assert kind == "CORR_M" and meta == {"x": 1}
    assert back.shapes == w.shapes and back.flat.tobytes() == w.flat.tobytes()
    raw = (tmp_path / "c.qtnn").read_bytes()
    (tmp_path / "t.qtnn").write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        qio.read_checkpoint(tmp_path / "t.qtnn")


@pytest.mark.parametrize("make", [
    lambda: CorrectorModel.create("quadratic", 1, 2, hidden=(8,), subset=(1, 3)),
    lambda: CorrectorModel.create("pi_only", 2, 5, hidden=(8, 8)),
    lambda: SelectorReconstructor.create("custom", 1, hidden_size=6),
    lambda: SelectorReconstructor.create("predefined", 2, hidden_size=6),
])
def test_model_round_trip(tmp_path, make):
    model = make()
    model.weights.flat += 0.01
    qio.save_model(tmp_path / "m.qtnn", model, extra={"note": "x"})
    back = qio.load_model(tmp_path / "m.qtnn")
    assert type(back) is type(model) and back.kind == model.kind
    assert back.weights.flat.tobytes() == model.weights.flat.tobytes()
    info = qio.inspect_file(tmp_path / "m.qtnn")
    assert info["kind"] == model.kind and info["n_parameters"] == len(model.weights)


def test_config_parsing():
    schema = SCHEMAS["gen"]
    text = "# comment\nschema_version = 1\nn_qubits = 3  # inline\ncount = 5\n"
    v = qio.parse_config(text, schema)
    assert v["n_qubits"] == 3 and v["count"] == 5 and v["seed"] == 0
    assert qio.parse_config(qio.format_config(v), schema) == v
    with pytest.raises(InvalidSpec):
        qio.parse_config("schema_version = 1\nqubits = 2\n", schema)
    with pytest.raises(InvalidSpec):
        qio.parse_config("n_qubits = 2\n", schema)
    with pytest.raises(InvalidSpec):
        qio.parse_config("schema_version = 1\ncount = many\n", schema)


def test_help_documents_defaults():
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    for command, schema in SCHEMAS.items():
        text = sub[command].format_help()
        for key in schema:
            assert "--" + key.replace("_", "-") in text
        assert "default" in text


# ---------------------------------------------------------------------- CLI


def test_gen_is_byte_reproducible(run, tmp_path):
    assert run("gen", "--n-qubits", 1, "--count", 100, "--seed", 7, "--out", "a.qtds") == 0
    assert run("gen", "--n-qubits", 1, "--count", 100, "--seed", 7, "--out", "b.qtds") == 0
    assert (tmp_path / "a.qtds").read_bytes() == (tmp_path / "b.qtds").read_bytes()
    states, n = qio.read_dataset(tmp_path / "a.qtds")
    assert n == 1 and len(states) == 100 and all(is_valid(s) for s in states)
    assert run("gen", "--n-qubits", 1, "--count", 100, "--seed", 8, "--out", "c.qtds") == 0
    assert (tmp_path / "a.qtds").read_bytes() != (tmp_path / "c.qtds").read_bytes()


def test_gen_empty_and_x_states(run, tmp_path):
    assert run("gen", "--count", 0, "--out", "e.qtds") == 0
    states, n = qio.read_dataset(tmp_path / "e.qtds")
    assert states.shape == (0, 4, 4) and n == 2
    assert run("gen", "--ensemble", "x_state", "--count", 4, "--out", "x.qtds") == 0
    x, _ = qio.read_dataset(tmp_path / "x.qtds")
    assert np.all(x[:, 0, 1] == 0) and np.all(x[:, 1, 3] == 0)
    assert run("gen", "--ensemble", "x_state", "--n-qubits", 1, "--out", "bad.qtds") == 2


def test_config_file_and_flag_override(run, tmp_path):
    (tmp_path / "g.cfg").write_text("schema_version = 1\nn_qubits = 1\ncount = 5\nout = cfg.qtds\n")
    assert run("gen", "--config", "g.cfg") == 0
    assert qio.read_dataset(tmp_path / "cfg.qtds")[0].shape == (5, 2, 2)
    assert run("gen", "--config", "g.cfg", "--count", 3) == 0
    assert qio.read_dataset(tmp_path / "cfg.qtds")[0].shape == (3, 2, 2)
    (tmp_path / "bad.cfg").write_text("schema_version = 1\ncolour = red\n")
    assert run("gen", "--config", "bad.cfg") == 2


def test_exit_codes(run, tmp_path, capsys):
    assert run("frobnicate") == 1
    assert run("gen", "--count", "lots") == 1
    assert run("train") == 1  # --data missing
    assert run("sweep", "--data", "missing.qtds") == 2
    assert run("inspect", "missing.qtds") == 2


def test_inspect_prints_header(run, tmp_path, capsys):
    run("gen", "--n-qubits", 1, "--count", 2, "--out", "d.qtds")
    capsys.readouterr()
    assert run("inspect", "d.qtds") == 0
    info = json.loads(capsys.readouterr().out)
    assert info == {"format": "QTDS", "version": 1, "n_qubits": 1, "count": 2}


def test_train_resume_and_log(run, tmp_path):
    run("gen", "--n-qubits", 1, "--count", 128, "--out", "d.qtds")
    args = ["train", "--kind", "CORR_M", "--data", "d.qtds", "--subset", "1,3", "--epochs", 2]
    assert run(*args, "--out", "a.qtnn", "--log", "a.csv") == 0
    log = (tmp_path / "a.csv").read_text().splitlines()
    assert log[0] == "epoch,step,loss,ortho_residual" and len(log) == 3
    first = qio.load_model(tmp_path / "a.qtnn")
    assert first.step == 4 and first.subset == (1, 3)
    assert run(*args, "--resume", "a.qtnn", "--out", "b.qtnn") == 0
    assert qio.load_model(tmp_path / "b.qtnn").step == 8


def test_train_rejects_mismatched_data(run, tmp_path):
    run("gen", "--n-qubits", 1, "--count", 16, "--out", "one.qtds")
    run("gen", "--n-qubits", 2, "--count", 16, "--out", "two.qtds")
    assert run("train", "--data", "one.qtds", "--subset", "1,3", "--epochs", 1, "--out", "a.qtnn") == 0
    before = qio.load_model(tmp_path / "a.qtnn").weights.flat.copy()
    assert run("train", "--data", "two.qtds", "--resume", "a.qtnn", "--out", "a.qtnn") == 2
    assert np.array_equal(qio.load_model(tmp_path / "a.qtnn").weights.flat, before)
    assert run("train", "--kind", "LSTM_XYZ", "--data", "one.qtds") == 1


def test_train_lstm(run, tmp_path):
    run("gen", "--n-qubits", 1, "--count", 32, "--out", "d.qtds")
    assert run("train", "--kind", "LSTM_PRE", "--data", "d.qtds", "--hidden-size", 8, "--epochs", 1,
               "--out", "l.qtnn", "--log", "l.csv") == 0
    assert qio.load_model(tmp_path / "l.qtnn").kind == "LSTM_PRE"
    assert (tmp_path / "l.csv").read_text().startswith("epoch,step,loss,selector_loss")


def test_sweep_pinv_one_qubit(run, tmp_path):
    run("gen", "--n-qubits", 1, "--count", 200, "--seed", 3, "--out", "d.qtds")
    assert run("sweep", "--method", "pinv", "--data", "d.qtds", "--m", "1-4", "--out", "s.csv",
               "--svg", "s.svg", "--collections", 10) == 0
    text = (tmp_path / "s.csv").read_text()
    assert text.startswith("#") and "config_hash" in text
    (res,) = read_sweep_csv(text)
    assert [r.m for r in res.rows] == [1, 2, 3, 4]
    assert res.rows[-1].mean_bures < 1e-6
    assert (tmp_path / "s.svg").read_text().startswith("<svg")


def test_sweep_is_byte_reproducible(run, tmp_path):
    run("gen", "--n-qubits", 2, "--count", 20, "--seed", 3, "--out", "d.qtds")
    for name in ("a.csv", "b.csv"):
        assert run("sweep", "--method", "mle", "--data", "d.qtds", "--m", "0,3,9", "--collections", 3,
                   "--seed", 5, "--out", name) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_sweep_learned_methods_need_checkpoint(run, tmp_path):
    run("gen", "--n-qubits", 1, "--count", 64, "--out", "d.qtds")
    assert run("sweep", "--method", "corrector", "--data", "d.qtds") == 2
    assert run("sweep", "--method", "lstm", "--data", "d.qtds") == 2
    run("train", "--data", "d.qtds", "--subset", "1,3", "--epochs", 1, "--out", "c.qtnn")
    assert run("sweep", "--method", "corrector", "--data", "d.qtds", "--checkpoint", "c.qtnn", "--out", "c.csv") == 0
    (res,) = read_sweep_csv((tmp_path / "c.csv").read_text())
    assert [r.m for r in res.rows] == [2]
    run("train", "--kind", "LSTM_RND", "--data", "d.qtds", "--hidden-size", 8, "--epochs", 1, "--out", "l.qtnn")
    assert run("sweep", "--method", "lstm", "--data", "d.qtds", "--checkpoint", "l.qtnn", "--out", "l.csv") == 0
    assert [r.m for r in read_sweep_csv((tmp_path / "l.csv").read_text())[0].rows] == [1, 2, 3, 4]


def test_errormap_and_psdstats(run, tmp_path):
    run("gen", "--n-qubits", 1, "--count", 100, "--out", "d.qtds")
    assert run("errormap", "--method", "analytic_1q", "--data", "d.qtds", "--out", "e.csv") == 0
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "pair,alpha,beta,value" and len(lines) == 1 + 6 * 4
    assert run("errormap", "--method", "mle", "--data", "d.qtds") == 2
    assert run("psdstats", "--method", "pinv", "--data", "d.qtds", "--m", "2,3", "--out", "p.csv") == 0
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0].startswith("method,M,lowest_mean") and len(lines) == 3
