"""JSON and CSV formats for instances, model classes, policies and trajectories."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np

from .env import LmdpPsi, ModelClass, TrajectoryRecord
from .errors import ConfigError
from .policies import policy_from_dict

FORMAT = "lmdp-psi/1"
_ARRAYS = ("mixing", "init_dist", "transitions", "obs_kernel", "emission", "reward")


def instance_to_dict(theta: LmdpPsi, extra: Optional[dict] = None) -> dict:
    d = {"format": FORMAT, "name": theta.name, "horizon": theta.H,
         "shapes": {k: list(getattr(theta, k).shape) for k in _ARRAYS}}
    for k in _ARRAYS:
        d[k] = getattr(theta, k).tolist()
    if extra:
        d["extra"] = extra
    return d


def instance_from_dict(d: dict) -> LmdpPsi:
    try:
        arrays = {k: np.asarray(d[k], dtype=float) for k in _ARRAYS}
        horizon = d["horizon"]
    except KeyError as err:
        raise ConfigError(f"instance document lacks field {err}") from None
    for k, shape in d.get("shapes", {}).items():
        if k in arrays and list(arrays[k].shape) != list(shape):
            raise ConfigError(f"{k} has shape {arrays[k].shape}, document declares {shape}")
    return LmdpPsi(horizon=horizon, name=d.get("name", ""), **arrays)


def dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def save_instance(theta: LmdpPsi, path, extra: Optional[dict] = None) -> None:
    Path(path).write_text(dumps(instance_to_dict(theta, extra)))


def load_instance(path) -> LmdpPsi:
    return instance_from_dict(json.loads(Path(path).read_text()))


def model_class_to_dict(models: ModelClass) -> dict:
    return {"format": FORMAT, "truth_index": models.truth_index,
            "models": [instance_to_dict(th) for th in models]}


def model_class_from_dict(d: dict) -> ModelClass:
    return ModelClass([instance_from_dict(m) for m in d["models"]], d.get("truth_index"))


def save_model_class(models: ModelClass, path) -> None:
    Path(path).write_text(dumps(model_class_to_dict(models)))


def load_model_class(path) -> ModelClass:
    return model_class_from_dict(json.loads(Path(path).read_text()))


def policy_to_json(policy) -> str:
    return dumps({"format": FORMAT, "hash": policy.content_hash(), "policy": policy.to_dict()})


def policy_from_json(text: str):
    d = json.loads(text)
    pol = policy_from_dict(d["policy"])
    if "hash" in d and d["hash"] != pol.content_hash():
        raise ConfigError("policy content hash mismatch")
    return pol


TRAJECTORY_COLUMNS = ("episode", "iota", "m", "t", "s", "a", "o", "r")


def trajectories_to_csv(records: Iterable[TrajectoryRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for k, tr in enumerate(records, start=1):
        for t in range(tr.H):
            w.writerow([k, tr.iota, tr.m, t + 1, tr.states[t], tr.actions[t],
                        tr.observations[t], repr(float(tr.rewards[t]))])
    return buf.getvalue()


def trajectories_from_csv(text: str) -> List[TrajectoryRecord]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out, cur, key = [], [], None
    for r in rows + [None]:
        k = None if r is None else r["episode"]
        if cur and k != key:
            out.append(TrajectoryRecord(
                int(cur[0]["iota"]), int(cur[0]["m"]),
                tuple(int(x["s"]) for x in cur), tuple(int(x["a"]) for x in cur),
                tuple(int(x["o"]) for x in cur), tuple(float(x["r"]) for x in cur)))
            cur = []
        if r is not None:
            cur.append(r)
            key = k
    return out


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else
                    ("" if v is None else v) for v in row])
    return buf.getvalue()
