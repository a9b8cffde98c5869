"""``qtomo`` command line: gen, train, sweep, errormap, psdstats, inspect.

Every command takes ``--config FILE`` (flat ``key = value`` text with a
``schema_version`` line); explicit flags override values from the file.
Exit status: 0 success, 1 usage error, 2 runtime error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as qio
from .errors import InvalidSpec, ShapeMismatch, TomographyError, UnsupportedCombination
from .mle import MleConfig
from .nn import TrainConfig
from .states import RandomStateConfig, generate_dataset, x_state_dataset

SCHEMAS = {
    "gen": {
        "n_qubits": (int, 2),
        "count": (int, 1000),
        "seed": (int, 0),
        "ensemble": (str, "mixed"),
        "out": (str, "dataset.qtds"),
    },
    "train": {
        "kind": (str, "CORR_M"),
        "data": (str, ""),
        "out": (str, "model.qtnn"),
        "log": (str, ""),
        "m": (int, 0),
        "subset": (tuple, ()),
        "epochs": (int, 20),
        "batch_size": (int, 64),
        "learning_rate": (float, 1e-3),
        "ortho_weight": (float, 0.1),
        "cosine": (bool, False),
        "hidden_size": (int, 256),
        "steps": (int, 0),
        "seed": (int, 0),
        "resume": (str, ""),
    },
    "sweep": {
        "method": (str, "pinv"),
        "data": (str, ""),
        "m": (str, ""),
        "collections": (int, 100),
        "checkpoint": (str, ""),
        "out": (str, ""),
        "svg": (str, ""),
        "seed": (int, 0),
        "jobs": (int, 1),
    },
    "errormap": {
        "method": (str, "pinv"),
        "data": (str, ""),
        "checkpoint": (str, ""),
        "out": (str, ""),
    },
    "psdstats": {
        "method": (str, "pinv"),
        "data": (str, ""),
        "m": (str, ""),
        "collections": (int, 10),
        "checkpoint": (str, ""),
        "out": (str, ""),
        "seed": (int, 0),
    },
}

HELP = {
    "n_qubits": "number of qubits",
    "count": "number of states",
    "seed": "seed for all randomness",
    "ensemble": "mixed (haar/ginibre/purified/max-entangled mix) or x_state",
    "out": "output file (stdout when empty for reports)",
    "kind": "CORR_M, CORR_PI, CORR_Q, LSTM_RND, LSTM_PRE or LSTM_CUS",
    "data": "dataset file (QTDS)",
    "log": "training-log CSV",
    "m": "number of measurements (sweeps accept ranges like 1-16 or lists 1,2,8)",
    "subset": "fixed 1-based collection for a corrector, e.g. 1,3",
    "epochs": "training epochs",
    "batch_size": "minibatch size",
    "learning_rate": "Adam learning rate",
    "ortho_weight": "weight of the orthogonality penalty (correctors)",
    "cosine": "cosine-decay the learning rate over the epochs",
    "hidden_size": "LSTM hidden units",
    "steps": "LSTM training episode length (0 = 4^N)",
    "resume": "checkpoint to continue training from",
    "method": "pinv, mle, analytic_1q, corrector or lstm",
    "collections": "measurement collections sampled per M",
    "checkpoint": "model checkpoint(s), comma separated",
    "svg": "optional SVG line chart",
    "jobs": "worker processes for sweeps (results do not depend on it)",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="qtomo", description="Quantum state tomography benchmarks")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value config file")
        for key, (typ, default) in schema.items():
            flag = "--" + key.replace("_", "-")
            text = f"{HELP.get(key, key)} (default: {default if default != () else 'none'})"
            if typ is bool:
                p.add_argument(flag, dest=key, action="store_const", const=True, default=None, help=text)
            else:
                p.add_argument(flag, dest=key, default=None, help=text,
                               type=(lambda s: qio._convert(tuple, s, "subset")) if typ is tuple else typ)
    p = sub.add_parser("inspect")
    p.add_argument("path", help="dataset or checkpoint file")
    return parser


def resolve(command, args):
    schema = SCHEMAS[command]
    if args.config:
        values = qio.parse_config(Path(args.config).read_text(), schema)
    else:
        values = {k: d for k, (_, d) in schema.items()}
    for key in schema:
        val = getattr(args, key)
        if val is not None:
            values[key] = val
    return values


def parse_m(text, total):
    if not text:
        return list(range(1, total + 1))
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _write(path, text):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _load_models(spec):
    return [qio.load_model(p) for p in spec.split(",") if p]


def _need(values, key):
    if not values[key]:
        raise UsageError(f"--{key.replace('_', '-')} is required")
    return values[key]


# ------------------------------------------------------------------ commands


def cmd_gen(v):
    if v["n_qubits"] < 1 or v["count"] < 0:
        raise InvalidSpec("n_qubits must be >= 1 and count >= 0")
    if v["ensemble"] == "mixed":
        states = generate_dataset(RandomStateConfig(v["n_qubits"], v["seed"]), v["count"])
    elif v["ensemble"] == "x_state":
        if v["n_qubits"] != 2:
            raise InvalidSpec("X states are 2-qubit states")
        states = x_state_dataset(v["count"], v["seed"])
    else:
        raise InvalidSpec(f"unknown ensemble {v['ensemble']!r}")
    qio.write_dataset(v["out"], np.asarray(states).reshape(v["count"], 2 ** v["n_qubits"], 2 ** v["n_qubits"]), v["n_qubits"])


def cmd_train(v):
    from .models.corrector import CHECKPOINT_KIND as CORR, train_corrector
    from .models.lstm import CHECKPOINT_KIND as LSTM, train_selector_reconstructor

    states, n_qubits = qio.read_dataset(_need(v, "data"))
    kinds = {k: ("corrector", var) for var, k in CORR.items()}
    kinds.update({k: ("lstm", mode) for mode, k in LSTM.items()})
    if v["kind"] not in kinds:
        raise UsageError(f"unknown model kind {v['kind']!r}")
    family, sub = kinds[v["kind"]]
    model = None
    if v["resume"]:
        model = qio.load_model(v["resume"])
        if model.kind != v["kind"]:
            raise ShapeMismatch(f"checkpoint holds {model.kind}, asked for {v['kind']}")
        if model.n_qubits != n_qubits:
            raise ShapeMismatch(f"checkpoint is for {model.n_qubits} qubits, data for {n_qubits}")
    cfg = TrainConfig(batch_size=v["batch_size"], learning_rate=v["learning_rate"], epochs=v["epochs"],
                      seed=v["seed"], ortho_weight=v["ortho_weight"])
    epochs = v["epochs"]
    sched = (lambda e: 0.5 * (1 + np.cos(np.pi * e / epochs))) if v["cosine"] else None
    if family == "corrector":
        subset = tuple(v["subset"]) or (model.subset if model else None)
        m = len(subset) if subset else (v["m"] or (model.m if model else 0))
        if not m:
            raise UsageError("corrector training needs --m or --subset")
        if model is not None and model.m != m:
            raise ShapeMismatch(f"checkpoint has M={model.m}, asked for M={m}")
        model, log = train_corrector(states, m, sub, cfg, subset=subset, model=model, lr_schedule=sched)
        header = "epoch,step,loss,ortho_residual"
        rows = [f"{r['epoch']},{r['step']},{r['loss']!r},{r['ortho_residual']!r}" for r in log.rows]
    else:
        model, log = train_selector_reconstructor(states, sub, cfg, model=model, steps=v["steps"] or None,
                                                  hidden_size=v["hidden_size"], lr_schedule=sched)
        header = "epoch,step,loss,selector_loss"
        rows = [f"{r['epoch']},{r['step']},{r['loss']!r},{r['selector_loss']!r}" for r in log.rows]
    run = {k: (list(val) if isinstance(val, tuple) else val) for k, val in v.items()}
    qio.save_model(v["out"], model, extra=run)
    if v["log"]:
        Path(v["log"]).write_text("\n".join([header] + rows) + "\n")


def cmd_sweep(v):
    from .sweep import bures_sweep, config_hash, svg_chart

    states, n_qubits = qio.read_dataset(_need(v, "data"))
    models = _load_models(v["checkpoint"])
    if v["method"] in ("corrector", "lstm") and not models:
        raise UnsupportedCombination(f"method {v['method']} needs --checkpoint")
    if v["method"] == "corrector" and not v["m"]:
        m_values = sorted({mod.m for mod in models})
    else:
        m_values = parse_m(v["m"], 4**n_qubits)
    res = bures_sweep(states, v["method"], m_values, v["collections"], v["seed"], n_qubits,
                      models=models, mle_cfg=MleConfig(), jobs=v["jobs"])
    res.metadata["dataset"] = v["data"]
    res.metadata["checkpoints"] = v["checkpoint"] or "none"
    res.metadata["config_hash"] = config_hash({k: val for k, val in v.items() if k not in ("jobs", "out", "svg")})
    _write(v["out"], res.to_csv())
    if v["svg"]:
        Path(v["svg"]).write_text(svg_chart([res]))


def cmd_errormap(v):
    from .models.corrector import reconstruct_batch
    from .reconstruct import analytic_1q
    from .metrics import error_map
    from .sweep import error_map_csv, error_maps_1q, pinv_batch

    states, n_qubits = qio.read_dataset(_need(v, "data"))
    if n_qubits != 1:
        raise UnsupportedCombination("error maps are defined for the 1-qubit pair experiment")
    method = v["method"]
    if method == "pinv":
        maps = error_maps_1q(states, lambda pair, m: pinv_batch(states, pair, 1))
    elif method == "analytic_1q":
        maps = error_maps_1q(states, lambda pair, m: np.stack([analytic_1q(pair, row) for row in m]))
    elif method == "corrector":
        by_pair = {mod.subset: mod for mod in _load_models(v["checkpoint"]) if mod.subset}
        if not by_pair:
            raise UnsupportedCombination("corrector error maps need fixed-pair checkpoints")
        maps = {p: error_map(states, reconstruct_batch(by_pair[p], states, p)) for p in sorted(by_pair)}
    else:
        raise UnsupportedCombination(f"no error map for method {method!r}")
    _write(v["out"], error_map_csv(maps))


def cmd_psdstats(v):
    from .sweep import psd_stats_csv, raw_reconstructions

    states, n_qubits = qio.read_dataset(_need(v, "data"))
    models = _load_models(v["checkpoint"])
    if v["method"] == "corrector" and not v["m"]:
        m_values = sorted({mod.m for mod in models})
    else:
        m_values = parse_m(v["m"], 4**n_qubits)
    table = {(v["method"], m): raw_reconstructions(states, v["method"], m, v["collections"], v["seed"], models)
             for m in m_values}
    _write(v["out"], psd_stats_csv(table))


def cmd_inspect(path):
    sys.stdout.write(json.dumps(qio.inspect_file(path), indent=2, sort_keys=True) + "\n")


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "sweep": cmd_sweep, "errormap": cmd_errormap, "psdstats": cmd_psdstats}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command == "inspect":
            cmd_inspect(args.path)
        else:
            COMMANDS[args.command](resolve(args.command, args))
    except UsageError as exc:
        print(f"qtomo: usage error: {exc}", file=sys.stderr)
        return 1
    except (TomographyError, OSError, ValueError) as exc:
        print(f"qtomo: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
