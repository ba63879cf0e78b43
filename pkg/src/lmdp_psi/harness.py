"""Seeded experiment presets, bundled fixtures, manifests and scaling fits."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .env import DEFAULT_BUDGET, LmdpPsi, ModelClass, tree_size_bound
from .errors import ConfigError, SizeError
from .hardgen import (HardInstanceSpec, build_hard_instance, effective_alpha_certificate,
                      sample_emission_assignment)
from .learning import RunLog, explore_then_exploit, informed_gap_of_model, omle_regret_min, pure_explore
from .planning import plan_blind_optimal, plan_informed_optimal
from .serialization import (dumps, instance_to_dict, load_instance,
                            load_model_class, model_class_to_dict, rows_to_csv)

DATA_DIR = Path(__file__).parent / "data"
FIXTURES = {
    "tiny-mdp": "tiny-mdp.json",
    "mixed-m2": "mixed-m2.json",
    "hard-m8": "hard-m8.json",
}
MODEL_CLASSES = {"mixed-m2": "mixed-m2-class.json"}
PRESETS = ("regret-blind", "explore", "ete", "gap-demo", "scaling")
CODE_VERSION = "0.1.0"


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------

MIXED_REWARD = np.array([[[0.8, 0.2], [0.6, 0.3]],
                         [[0.2, 0.8], [0.3, 0.7]]])
MIXED_EMISSION = np.array([[0.6, 0.1], [0.3, 0.3], [0.1, 0.6]])
MIXED_INIT = np.array([[0.7, 0.3], [0.4, 0.6]])


def make_mixed(mixing=(0.5, 0.5), reward_prob=MIXED_REWARD, emission=MIXED_EMISSION,
               init=MIXED_INIT, stay: float = 0.8, name: str = "mixed-m2") -> LmdpPsi:
    """Two contexts with opposite preferred actions; action 0 tends to stay, 1 to switch."""
    T = np.zeros((2, 2, 2, 2))
    for s in range(2):
        T[:, s, 0, s], T[:, s, 0, 1 - s] = stay, 1 - stay
        T[:, s, 1, 1 - s], T[:, s, 1, s] = stay, 1 - stay
    r = np.asarray(reward_prob, dtype=float)
    return LmdpPsi(np.asarray(mixing, dtype=float), np.asarray(init, dtype=float), T,
                   np.stack([1 - r, r], axis=-1), np.asarray(emission, dtype=float),
                   np.array([0.0, 1.0]), 2, name)


def _with_reward(m, s, a, v):
    r = MIXED_REWARD.copy()
    r[m, s, a] = v
    return r


def make_mixed_class() -> ModelClass:
    """Truth at index 3 among seven perturbations, several of them optimistic."""
    truth = make_mixed()
    alts = [
        make_mixed(mixing=(0.7, 0.3), name="skewed-mixing"),
        make_mixed(reward_prob=_with_reward(1, 0, 1, 0.95), name="optimistic-a"),
        make_mixed(reward_prob=_with_reward(0, 1, 0, 0.85), name="optimistic-b"),
        make_mixed(emission=MIXED_EMISSION[::-1], name="swapped-emission"),
        make_mixed(stay=0.6, name="loose-dynamics"),
        make_mixed(reward_prob=_with_reward(0, 0, 1, 0.45), name="pessimistic"),
        make_mixed(init=MIXED_INIT[::-1], name="swapped-init"),
    ]
    return ModelClass(alts[:3] + [truth] + alts[3:], truth_index=3)


def make_tiny_mdp() -> LmdpPsi:
    """Single context: two states, two actions, three steps."""
    T = np.array([[[[0.9, 0.1], [0.2, 0.8]],
                   [[0.5, 0.5], [0.1, 0.9]]]])
    r = np.array([[[0.1, 0.5], [0.9, 0.3]]])
    return LmdpPsi(np.array([1.0]), np.array([[0.6, 0.4]]), T, np.stack([1 - r, r], axis=-1),
                   np.array([[0.5], [0.5]]), np.array([0.0, 1.0]), 3, "tiny-mdp")


def make_hard_fixture(seed: int = 0, alphabet: int = 64):
    spec = HardInstanceSpec(M=8, alpha=0.003, eps=0.1, alphabet=alphabet)
    asg = sample_emission_assignment(spec, np.random.default_rng(seed))
    theta = build_hard_instance(spec, asg)
    extra = {"spec": {"M": spec.M, "alpha": spec.alpha, "eps": spec.eps, "alphabet": spec.alphabet,
                      "n_explore": spec.n_explore, "n_control": spec.n_control,
                      "a_star": list(spec.a_star), "a_explore_star": spec.a_explore_star},
             "seed": seed, "alpha_eff": asg.alpha_eff, "certified": asg.certified,
             "resamples": asg.resamples, "signs": asg.signs.astype(int).tolist()}
    return theta, extra


def regenerate_fixtures(directory=DATA_DIR) -> None:
    """Write every bundled fixture; the output is deterministic."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    mc = make_mixed_class()
    truth = mc[mc.truth_index]
    for name, theta in (("tiny-mdp", make_tiny_mdp()), ("mixed-m2", truth)):
        cert = effective_alpha_certificate(theta.emission)
        extra = {"alpha_eff": cert.value if math.isfinite(cert.value) else "inf", "certified": cert.certified}
        (d / FIXTURES[name]).write_text(dumps(instance_to_dict(theta, extra)))
    (d / MODEL_CLASSES["mixed-m2"]).write_text(dumps(model_class_to_dict(mc)))
    theta, extra = make_hard_fixture()
    (d / FIXTURES["hard-m8"]).write_text(dumps(instance_to_dict(theta, extra)))


def fixture_path(name: str) -> Path:
    if name not in FIXTURES:
        raise ConfigError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}")
    return DATA_DIR / FIXTURES[name]


def fixture_metadata(name: str) -> dict:
    return json.loads(fixture_path(name).read_text()).get("extra", {})


def load_fixture(name: str) -> LmdpPsi:
    return load_instance(fixture_path(name))


def load_fixture_class(name: str = "mixed-m2") -> ModelClass:
    if name not in MODEL_CLASSES:
        raise ConfigError(f"no bundled model class for {name!r}")
    return load_model_class(DATA_DIR / MODEL_CLASSES[name])


def resolve_instance(source: str) -> LmdpPsi:
    """Fixture name or path to an instance JSON document."""
    if source in FIXTURES:
        return load_fixture(source)
    p = Path(source)
    if not p.exists():
        raise ConfigError(f"instance source {source!r} is neither a fixture nor a file")
    return load_instance(p)


def resolve_model_class(source: Optional[str], theta_star: LmdpPsi) -> ModelClass:
    if source is None:
        return ModelClass([theta_star], truth_index=0)
    if source in MODEL_CLASSES:
        return load_fixture_class(source)
    p = Path(source)
    if not p.exists():
        raise ConfigError(f"model-class source {source!r} is neither a fixture nor a file")
    return load_model_class(p)


# ---------------------------------------------------------------------------
# scaling fits
# ---------------------------------------------------------------------------

def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log y on log x over points with y > 0.

    Fewer than two positive points (a flat zero curve) gives slope 0.
    """
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    keep = ys > 0
    if keep.sum() < 2:
        return 0.0
    return float(np.polyfit(np.log(xs[keep]), np.log(ys[keep]), 1)[0])


def regret_slope(cum_regret: Sequence[float], lo: int = 200, hi: Optional[int] = None,
                 num: int = 20) -> float:
    """Log-log slope of a cumulative-regret curve sampled at log-spaced episodes in [lo, hi]."""
    cr = np.asarray(cum_regret, dtype=float)
    hi = len(cr) if hi is None else hi
    ks = np.unique(np.round(np.geomspace(lo, hi, num)).astype(int))
    return loglog_slope(ks, cr[ks - 1])


@dataclass
class ScalingFit:
    points: List[Tuple[float, float]]
    slope: float
    ci: Tuple[float, float]
    intercept: float = 0.0


def fit_scaling_exponent(points, n_boot: int = 1000, seed: int = 0, level: float = 0.95) -> ScalingFit:
    """Log-log slope through (K, median) points with a bootstrap CI over seeds.

    ``points`` is either a sequence of ``(K, value)`` pairs or a mapping
    ``K -> per-seed values``; only the latter carries seed-level uncertainty.
    """
    if isinstance(points, dict):
        Ks = sorted(points)
        per_seed = [np.asarray(points[k], dtype=float) for k in Ks]
    else:
        Ks = [float(k) for k, _ in points]
        per_seed = [np.asarray([v], dtype=float) for _, v in points]
    if len(Ks) < 4:
        raise ConfigError("a scaling fit needs at least 4 points")
    med = [float(np.median(v)) for v in per_seed]
    keep = [i for i, v in enumerate(med) if v > 0]
    if len(keep) < 2:
        raise ConfigError("a scaling fit needs positive values")
    slope, intercept = np.polyfit(np.log([Ks[i] for i in keep]), np.log([med[i] for i in keep]), 1)
    rng = np.random.default_rng(seed)
    boots = []
    for _ in range(n_boot):
        sample = [float(np.median(rng.choice(v, size=len(v)))) for v in per_seed]
        boots.append(loglog_slope(Ks, sample))
    tail = (1 - level) / 2
    ci = (float(np.quantile(boots, tail)), float(np.quantile(boots, 1 - tail)))
    if not math.isfinite(slope):
        raise ConfigError("scaling fit produced a non-finite slope")
    return ScalingFit(list(zip(map(float, Ks), med)), float(slope), ci, float(intercept))


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    preset: str
    instance: str = "mixed-m2"
    model_class: Optional[str] = "mixed-m2"
    K: int = 2000
    delta: float = 0.1
    epsilon: float = 0.1
    c: float = 0.01
    c_beta: float = 1.0
    c_split: float = 4.0
    seeds: List[int] = field(default_factory=lambda: [0])
    out_dir: str = "runs"
    planner_budget: int = DEFAULT_BUDGET
    K_list: List[int] = field(default_factory=lambda: [2000, 5000, 10000, 20000, 50000])
    max_episodes: int = 50_000

    def validate(self) -> None:
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {PRESETS}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.K < 1 or any(k < 1 for k in self.K_list):
            raise ConfigError("K must be at least 1")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if not 0 < self.c <= 1:
            raise ConfigError("c must lie in (0, 1]")
        if self.epsilon <= 0 or self.c_beta <= 0 or self.c_split <= 0:
            raise ConfigError("epsilon, c_beta and c_split must be positive")
        if self.preset == "scaling" and len(self.K_list) < 4:
            raise ConfigError("the scaling preset needs at least 4 values of K")

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """Hash of everything but the output directory."""
        d = {k: v for k, v in self.to_dict().items() if k != "out_dir"}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        if "preset" not in d:
            raise ConfigError("config needs a preset")
        return cls(**d)


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _median_curve(logs: Sequence[RunLog]) -> np.ndarray:
    n = min(len(l.rows) for l in logs)
    return np.median(np.stack([l.cum_regret[:n] for l in logs]), axis=0)


def run_preset(cfg: ExperimentConfig) -> Path:
    """Run every seed of a preset and write CSVs plus ``manifest.json``.

    Config errors surface before any run starts.  Outputs depend only on the
    config, so re-running a manifest reproduces every CSV byte for byte.
    """
    cfg.validate()
    theta = resolve_instance(cfg.instance)
    models = resolve_model_class(cfg.model_class, theta) if cfg.preset != "gap-demo" else None
    if models is not None and not theta.same_spaces(models[0]):
        raise ConfigError("instance and model class do not share spaces")
    # the gap preset only plans, and the belief planners share one tree across symbols
    size = tree_size_bound(theta, informed=cfg.preset != "gap-demo")
    if size > cfg.planner_budget:
        raise SizeError(f"instance tree of {size} nodes exceeds the preset ceiling {cfg.planner_budget}",
                        size=size, budget=cfg.planner_budget)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: Dict[str, str] = {}
    extra: Dict[str, object] = {}

    def emit(name: str, text: str) -> None:
        p = out / name
        p.write_text(text)
        files[name] = _sha(p)

    if cfg.preset == "gap-demo":
        _, vb = plan_blind_optimal(theta, budget=cfg.planner_budget)
        _, vi = plan_informed_optimal(theta, budget=cfg.planner_budget)
        emit("gap.csv", rows_to_csv(("blind_value", "informed_value", "gap"), [(vb, vi, vi - vb)]))
        extra.update(blind_value=vb, informed_value=vi, gap=vi - vb)
    elif cfg.preset in ("regret-blind", "ete"):
        logs = []
        for seed in cfg.seeds:
            rng = np.random.default_rng(seed)
            if cfg.preset == "regret-blind":
                log = omle_regret_min(models, theta, cfg.K, cfg.delta, rng, cfg.c_beta,
                                      budget=cfg.planner_budget)
            else:
                log = explore_then_exploit(models, theta, cfg.K, cfg.delta, cfg.c, rng, cfg.c_split,
                                           cfg.c_beta, budget=cfg.planner_budget)
            emit(f"seed-{seed}.csv", log.to_csv())
            logs.append(log)
        med = _median_curve(logs)
        emit("aggregate.csv", rows_to_csv(("episode", "median_cum_regret"),
                                          [(k + 1, float(v)) for k, v in enumerate(med)]))
        extra["meta"] = [_jsonable(l.meta) for l in logs]
        if cfg.preset == "regret-blind" and len(med) >= 200:
            extra["median_slope"] = float(np.median([regret_slope(l.cum_regret) for l in logs]))
    elif cfg.preset == "explore":
        rows = []
        for seed in cfg.seeds:
            rng = np.random.default_rng(seed)
            res = pure_explore(models, theta, cfg.epsilon, cfg.delta, cfg.c, rng, cfg.c_beta,
                               max_episodes=cfg.max_episodes, budget=cfg.planner_budget)
            emit(f"seed-{seed}.csv", res.log.to_csv())
            gap = informed_gap_of_model(models[res.theta_hat_index], theta, cfg.planner_budget)
            rows.append((seed, res.episodes, int(res.cap_hit), res.theta_hat_index, gap))
            extra.setdefault("constants", asdict(res.constants))
        emit("aggregate.csv", rows_to_csv(("seed", "episodes", "cap_hit", "theta_hat_index", "informed_gap"), rows))
    elif cfg.preset == "scaling":
        per_k: Dict[int, List[float]] = {}
        for K in cfg.K_list:
            for seed in cfg.seeds:
                rng = np.random.default_rng(seed)
                log = explore_then_exploit(models, theta, K, cfg.delta, cfg.c, rng, cfg.c_split,
                                           cfg.c_beta, budget=cfg.planner_budget)
                emit(f"K-{K}-seed-{seed}.csv", log.to_csv())
                per_k.setdefault(K, []).append(float(log.cum_regret[-1]))
        fit = fit_scaling_exponent(per_k)
        emit("scaling.csv", rows_to_csv(("K", "median_cum_regret"), fit.points))
        extra["fit"] = {"slope": fit.slope, "ci": list(fit.ci)}
    manifest = {"config": cfg.to_dict(), "config_hash": cfg.config_hash(), "code_version": CODE_VERSION,
                "files": files, "results": _jsonable(extra)}
    (out / "manifest.json").write_text(dumps(manifest))
    return out


def rerun_manifest(manifest_path, out_dir) -> Path:
    """Run the config recorded in a manifest into ``out_dir``."""
    d = json.loads(Path(manifest_path).read_text())
    cfg = ExperimentConfig.from_dict(dict(d["config"], out_dir=str(out_dir)))
    return run_preset(cfg)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj
