"""Text checkpoint format: header, metadata block, named parameter blocks.

Values are written with 17 significant digits, which round-trips float64
exactly, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import numpy as np

from .bundle import ModelBundle, init_bundle
from .config import RunConfig, config_from_strings, config_items

HEADER = "NARA-CKPT v1"


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def save_checkpoint(bundle: ModelBundle, path: str) -> None:
    lines = [HEADER]
    cfg = bundle.config if isinstance(bundle.config, RunConfig) else None
    if cfg is None:
        raise ValueError("bundle carries no RunConfig; cannot serialize")
    for key, value in config_items(cfg):
        lines.append(f"meta config.{key} {value}")
    lines.append(f"meta data.mean {_fmt(bundle.data_mean)}")
    lines.append(f"meta data.std {_fmt(bundle.data_std)}")
    lines.append(f"meta trained.theta {int(bundle.theta_trained)}")
    lines.append(f"meta trained.prior {int(bundle.prior_trained)}")
    lines.append(f"meta trained.conf {int(bundle.conf_trained)}")
    cal = bundle.calibration
    lines.append(f"meta calibration.mode {cal.mode}")
    lines.append(f"meta calibration.kappa {_fmt(cal.kappa)}")
    lines.append(f"meta calibration.count {cal.count}")
    lines.append(f"meta calibration.mean {_fmt(cal.mean)}")
    blocks = dict(bundle.parameters())
    blocks["calibration.values"] = np.asarray(cal.values, dtype=np.float64)
    for name, arr in blocks.items():
        arr = np.asarray(arr, dtype=np.float64)
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"param {name} {arr.ndim} {dims}".rstrip())
        if arr.ndim == 2:
            for row in arr:
                lines.append(" ".join(_fmt(v) for v in row))
        else:
            flat = arr.reshape(-1)
            lines.append(" ".join(_fmt(v) for v in flat) if flat.size else "")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


class CheckpointError(ValueError):
    pass


def load_checkpoint(path: str) -> ModelBundle:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != HEADER:
        raise CheckpointError(f"checkpoint version mismatch: expected {HEADER!r}")
    meta: dict[str, str] = {}
    params: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("meta "):
            _tag, key, value = line.split(" ", 2)
            meta[key] = value
            i += 1
        elif line.startswith("param "):
            parts = line.split()
            name = parts[1]
            rank = int(parts[2])
            dims = tuple(int(d) for d in parts[3 : 3 + rank])
            i += 1
            if rank == 2:
                rows = []
                for _ in range(dims[0]):
                    rows.append([float(v) for v in lines[i].split()])
                    i += 1
                arr = np.asarray(rows, dtype=np.float64).reshape(dims)
            else:
                flat = [float(v) for v in lines[i].split()] if dims and dims[0] > 0 else []
                i += 1
                arr = np.asarray(flat, dtype=np.float64).reshape(dims)
            params[name] = arr
        elif not line.strip():
            i += 1
        else:
            raise CheckpointError(f"unparseable checkpoint line: {line!r}")

    cfg_strings = {k[len("config.") :]: v for k, v in meta.items() if k.startswith("config.")}
    cfg = config_from_strings(cfg_strings)
    bundle = init_bundle(
        window=cfg.o,
        chunk=cfg.M,
        hidden=cfg.hidden,
        layers=cfg.layers,
        kappa=cfg.kappa,
        calibration_mode=cfg.calibration,
        seed=cfg.seed,
    )
    bundle.config = cfg
    for name, target in bundle.parameters().items():
        if name not in params:
            raise CheckpointError(f"missing parameter block {name!r}")
        if params[name].shape != target.shape:
            raise CheckpointError(f"parameter {name!r} has shape {params[name].shape}, expected {target.shape}")
        target[...] = params[name]
    bundle.data_mean = float(meta["data.mean"])
    bundle.data_std = float(meta["data.std"])
    bundle.theta_trained = meta["trained.theta"] == "1"
    bundle.prior_trained = meta["trained.prior"] == "1"
    bundle.conf_trained = meta["trained.conf"] == "1"
    cal = bundle.calibration
    cal.mode = meta["calibration.mode"]
    cal.kappa = float(meta["calibration.kappa"])
    cal.count = int(meta["calibration.count"])
    cal.mean = float(meta["calibration.mean"])
    cal.values = [float(v) for v in params.get("calibration.values", np.empty(0))]
    return bundle
