"""Experiment runner: configuration, the check catalog, and report output.

Every check draws from ``RandomStream(seed, "recordgrid").spawn(check_name)``
so results do not depend on which other checks run or in what order.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .conditional import (ConditioningFailure, area_dependence_samples, lemma2_reflection_samples,
                          lemma2_unconditional_samples, lemma3_h_trend, lemma3_samples)
from .geometry import Rect, sample_ppp_batch
from .rand import MASK64, RandomStream
from .records import WindowCapExceeded, batch_record_mask, reflect_entries, simulate_quadrant_chains
from .samplers import (IDENTITY_NAMES, IdentitySpec, draw_variables, identity_pair,
                       m1n_entries_from, sample_identity)
from .stattest import (TestReport, ks_one_sample, moment_check, run_replicates, summarize)
from .theory import (DIAGONAL_TILE_MEAN, SUBDIAGONAL_TILE_MEAN, expected_box_records,
                     record_intensity_integral)

IDENTITY_FAMILIES = ("eq1", "eq2", "eq3", "prop1", "rowprod", "totalarea",
                     "negcontrol_transpose", "negcontrol_c00")
DEFAULT_FAMILIES = ("eq1", "eq3", "prop1", "rowprod", "totalarea",
                    "negcontrol_transpose", "negcontrol_c00")
RECORD_KEYS = ("check", "kind", "replicate", "n", "N", "B", "K", "seed", "statistic", "p",
               "decision", "expected_direction")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 1
    identities: tuple[str, ...] = ()
    ns: tuple[int, ...] = (1, 2, 3, 4)
    N: int = 100_000
    B: int = 199
    K: int = 20
    alpha: float = 0.05
    out: Path = Path("out")
    emit_samples: bool = False

    def validate(self) -> "RunConfig":
        if not 0 <= self.seed <= MASK64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        for key in ("N", "B", "K"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive")
        if not self.ns or min(self.ns) < 1:
            raise ConfigError("n values must be positive integers")
        if not 0 < self.alpha < 0.5:
            raise ConfigError(f"alpha must lie in (0, 0.5), got {self.alpha}")
        if self.B < 19:
            raise ConfigError("B must be at least 19")
        for name in self.identities:
            if _family_of(name) is None:
                raise ConfigError(f"unknown identity {name!r}")
        return self

    @property
    def families(self) -> tuple[str, ...]:
        if not self.identities:
            return DEFAULT_FAMILIES
        seen = []
        for name in self.identities:
            fam = _family_of(name)
            if fam not in seen:
                seen.append(fam)
        return tuple(seen)


def _family_of(name: str) -> str | None:
    if name in IDENTITY_FAMILIES:
        return name
    for suffix in ("_lhs", "_rhs", "_closed", "_geom"):
        if name.endswith(suffix) and name[: -len(suffix)] in IDENTITY_FAMILIES:
            return name[: -len(suffix)]
    return name if name in ("negcontrol_transpose", "negcontrol_c00") else None


_TYPES = {"seed": int, "N": int, "B": int, "K": int, "alpha": float}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            if key in _TYPES:
                values[key] = _TYPES[key](value)
            elif key == "identities":
                values[key] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif key in ("n", "ns"):
                values["ns"] = tuple(int(v) for v in value.split(",") if v.strip())
            elif key == "out":
                values[key] = Path(value)
            elif key == "emit_samples":
                values[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return values


# ---------------------------------------------------------------------------
# results


@dataclass
class CheckResult:
    name: str
    n: int | None
    expected: str
    passed: bool
    records: list[dict] = field(default_factory=list)
    error: str | None = None
    resource_failure: bool = False
    summary: str = ""


def _record(cfg: RunConfig, check: str, kind: str, *, replicate=None, n=None, N=None, B=None,
            K=None, statistic=None, p=None, decision="", expected="null", **detail) -> dict:
    rec = dict(check=check, kind=kind, replicate=replicate, n=n, N=N, B=B, K=K, seed=cfg.seed,
               statistic=statistic, p=p, decision=decision, expected_direction=expected)
    if detail:
        rec["detail"] = detail
    return rec


def _summary_records(cfg, name, n, N, summary, test="energy"):
    recs = []
    for i, rep in enumerate(summary.reports):
        recs.append(_record(cfg, name, "test", replicate=i, n=n, N=N, B=rep.n_permutations, K=summary.K,
                            statistic=rep.statistic, p=rep.p_value,
                            decision="reject" if rep.reject else "accept",
                            expected=summary.expected, test=rep.test, transform=rep.transform))
    recs.append(_record(cfg, name, "summary", n=n, N=N, B=cfg.B, K=summary.K,
                        statistic=float(np.median(summary.statistics)),
                        p=float(np.median(summary.p_values)),
                        decision="pass" if summary.passed else "fail", expected=summary.expected,
                        rejections=summary.rejections, bound=summary.bound, alpha=summary.alpha,
                        test=test))
    return recs


def _summary_line(summary) -> str:
    op = "<=" if summary.expected == "null" else ">="
    return f"{summary.rejections}/{summary.K} rejections (need {op} {summary.bound})"


def replicated_check(cfg: RunConfig, stream: RandomStream, name: str, n, N: int,
                     make_samples: Callable, *, expected="null", statistic="energy",
                     transform="tame", sample_sink=None) -> CheckResult:
    def sampled(rs):
        a, b = make_samples(rs)
        if sample_sink is not None:
            sample_sink(rs, a, b)
        return a, b

    summary = run_replicates(sampled, K=cfg.K, B=cfg.B, alpha=cfg.alpha, stream=stream,
                             statistic=statistic, transform=transform, expected=expected, name=name)
    return CheckResult(name, n, expected, summary.passed,
                       _summary_records(cfg, name, n, N, summary, statistic),
                       summary=_summary_line(summary))


# ---------------------------------------------------------------------------
# check catalog


def identity_checks(cfg: RunConfig) -> list[tuple[str, Callable]]:
    """(check name, thunk) for the configured identity families."""
    out = []
    for fam in cfg.families:
        if fam == "eq1":
            orders = cfg.ns
        elif fam in ("prop1", "rowprod"):
            orders = tuple(n for n in cfg.ns if n >= 2)
        elif fam == "totalarea":
            orders = tuple(n for n in cfg.ns if n <= 3)
        else:
            orders = (None,)
        for n in orders:
            pair = identity_pair(fam, n or 1)
            out.append((pair.name, _identity_thunk(pair)))
    return out


def _identity_thunk(pair):
    def run(cfg: RunConfig, stream: RandomStream) -> CheckResult:
        sink = None
        if cfg.emit_samples:
            def sink(rs, a, b, _done=[]):
                if not _done:
                    _done.append(True)
                    folder = cfg.out / "samples"
                    write_samples_csv(folder / f"{pair.name}_{pair.lhs.name}.csv", a)
                    write_samples_csv(folder / f"{pair.name}_{pair.rhs.name}.csv", b)
        return replicated_check(cfg, stream, pair.name, pair.n, cfg.N,
                                lambda rs: pair.sample_pair(rs, cfg.N),
                                expected=pair.expected, sample_sink=sink)
    return run


class _WindowStats:
    def __init__(self):
        self.max_side = 0.0
        self.expansions = []

    def add(self, batch):
        self.max_side = max(self.max_side, float(batch.window_side.max()))
        self.expansions.append(batch.expansions)

    def record(self, cfg: RunConfig) -> dict:
        e = np.concatenate(self.expansions) if self.expansions else np.zeros(0)
        return _record(cfg, "window_expansion", "window_stats", N=int(e.size), decision="info",
                       expected="info", max_side=self.max_side,
                       mean_expansions=float(e.mean()) if e.size else 0.0,
                       max_expansions=int(e.max()) if e.size else 0,
                       realizations=int(e.size))


def _geometric_vs_closed(n: int, stats: _WindowStats):
    def make(cfg: RunConfig, stream: RandomStream) -> CheckResult:
        def samples(rs):
            chains = simulate_quadrant_chains(rs.spawn("geometric"), 0, n + 1, cfg.N)
            stats.add(chains)
            geo = chains.tile_entries(1, n).reshape(cfg.N, -1)
            closed = sample_identity(IdentitySpec("prop1_lhs", n), rs.spawn("closed"), cfg.N).rows
            return geo, closed
        return replicated_check(cfg, stream, f"oracle_geometric_n{n}", n, cfg.N, samples)
    return make


def _eq5_reflection(shift: int, stats: _WindowStats):
    # (C_ij)_{i,j=1,2} vs reflected (C_ij)_{i,j=k..k+1}, k = -2 - shift
    def make(cfg: RunConfig, stream: RandomStream) -> CheckResult:
        k = -2 - shift

        def samples(rs):
            plain = simulate_quadrant_chains(rs.spawn("plain"), 0, 3, cfg.N)
            mirror = simulate_quadrant_chains(rs.spawn("mirror"), k, 1, cfg.N)
            stats.add(plain)
            stats.add(mirror)
            a = plain.tile_entries(1, 2).reshape(cfg.N, -1)
            b = reflect_entries(mirror.tile_entries(k, 2)).reshape(cfg.N, -1)
            return a, b
        name = "eq5_reflection" if shift == 1 else f"eq5_reflection_shift{shift}"
        return replicated_check(cfg, stream, name, 2, cfg.N, samples)
    return make


def _c00_vs_c11(stats: _WindowStats):
    def make(cfg: RunConfig, stream: RandomStream) -> CheckResult:
        def samples(rs):
            a_chain = simulate_quadrant_chains(rs.spawn("c00"), 0, 1, cfg.N)
            b_chain = simulate_quadrant_chains(rs.spawn("c11"), 0, 2, cfg.N)
            stats.add(a_chain)
            stats.add(b_chain)
            h0, w0 = a_chain.tiles(0, 1)
            h1, w1 = b_chain.tiles(1, 1)
            return (h0 * w0)[:, 0], (h1 * w1)[:, 0]
        return replicated_check(cfg, stream, "oracle_c00_vs_c11", 1, cfg.N, samples,
                                expected="reject", statistic="ks", transform="none")
    return make


def markov_transition_check(cfg: RunConfig, stream: RandomStream, stats: _WindowStats | None = None):
    """One-sample KS of ``((t'-t) x, x'/x)`` against Exp(1) and Uniform(0,1)."""
    exp_reports, uni_reports = [], []
    for i in range(cfg.K):
        chains = simulate_quadrant_chains(stream.spawn("rep", i), 0, 2, cfg.N)
        if stats is not None:
            stats.add(chains)
        j = chains.column(1)
        gap = (chains.t[:, j + 1] - chains.t[:, j]) * chains.x[:, j]
        ratio = chains.x[:, j + 1] / chains.x[:, j]
        for reports, sample, cdf, label in (
                (exp_reports, gap, lambda z: -np.expm1(-z), "markov_transition_exp"),
                (uni_reports, ratio, lambda z: np.clip(z, 0.0, 1.0), "markov_transition_uniform")):
            d, p = ks_one_sample(sample, cdf)
            reports.append(TestReport(label, d, p, 0, cfg.N, cfg.alpha, p <= cfg.alpha, "none", "ks1"))
    out = []
    for label, reports in (("markov_transition_exp", exp_reports),
                           ("markov_transition_uniform", uni_reports)):
        summary = summarize(label, reports, cfg.alpha)
        out.append(CheckResult(label, 1, "null", summary.passed,
                               _summary_records(cfg, label, 1, cfg.N, summary, "ks1"),
                               summary=_summary_line(summary)))
    return out


def moment_checks(cfg: RunConfig, stream: RandomStream) -> list[CheckResult]:
    """Finite-mean targets at 10 N draws each, 3 SEM tolerance."""
    big = 10 * cfg.N
    out = []

    def add(name, sample, target, n=None):
        m = moment_check(sample, target, 3.0)
        rec = _record(cfg, name, "moment", n=n, N=m.sample_size, statistic=m.mean,
                      decision="pass" if m.passed else "fail", expected="target",
                      target=target, sem=m.sem, ci_low=m.ci_low, ci_high=m.ci_high)
        out.append(CheckResult(name, n, "target", m.passed, [rec],
                               summary=f"mean {m.mean:.5f} vs {target:.5f} (3 SEM = {3 * m.sem:.5f})"))

    u, e = draw_variables(stream.spawn("closed"), 3, big)
    m = m1n_entries_from(u, e, 3)
    for i in range(3):
        add(f"moment_c{i + 1}{i + 1}", m[:, i, i], DIAGONAL_TILE_MEAN, 3)
    for i in range(2):
        add(f"moment_c{i + 2}{i + 1}", m[:, i + 1, i], SUBDIAGONAL_TILE_MEAN, 3)

    unit = Rect.square(1.0)
    pts = sample_ppp_batch(stream.spawn("box"), unit, big)
    counts = np.bincount(pts.group[batch_record_mask(pts)], minlength=big)
    add("moment_box_records_area1", counts, expected_box_records(1.0))

    window = Rect(1.0, 2.0, 1.0, 2.0)
    pts = sample_ppp_batch(stream.spawn("quadrant"), Rect.square(2.0), big)
    rec = batch_record_mask(pts)
    inside = rec & (pts.t > window.t_lo) & (pts.x > window.x_lo)
    counts = np.bincount(pts.group[inside], minlength=big)
    add("moment_quadrant_records_1_2", counts, record_intensity_integral(window))
    return out


def lemma_checks(cfg: RunConfig) -> list[tuple[str, Callable]]:
    unit = Rect.square(1.0)
    checks = []
    for n in (0, 1, 2):
        checks.append((f"lemma2_reflection_n{n}", lambda c, s, n=n: replicated_check(
            c, s, f"lemma2_reflection_n{n}", n, c.N,
            lambda rs: lemma2_reflection_samples(rs, unit, n, c.N))))
    checks.append(("lemma2_unconditional", lambda c, s: replicated_check(
        c, s, "lemma2_unconditional", None, c.N,
        lambda rs: lemma2_unconditional_samples(rs, unit, c.N))))
    checks.append(("lemma2_area_only", lambda c, s: replicated_check(
        c, s, "lemma2_area_only", None, c.N,
        lambda rs: area_dependence_samples(rs, unit, Rect(0.0, 2.0, 0.0, 0.5), c.N),
        transform="none")))
    checks.append(("lemma2_area_mismatch", lambda c, s: replicated_check(
        c, s, "lemma2_area_mismatch", None, c.N,
        lambda rs: area_dependence_samples(rs, unit, Rect.square(2.0), c.N, check_areas=False),
        expected="reject", transform="none")))
    n3 = lemma3_size(cfg)
    checks.append(("lemma3_n2", lambda c, s: replicated_check(
        c, s, "lemma3_n2", 2, n3, lambda rs: lemma3_samples(rs, 2, 1.0, 0.05, n3)[:2])))
    checks.append(("lemma3_h_trend", _lemma3_trend))
    return checks


def lemma3_size(cfg: RunConfig) -> int:
    return max(cfg.N // 10, 10)


def _lemma3_trend(cfg: RunConfig, stream: RandomStream) -> CheckResult:
    n3 = lemma3_size(cfg)
    tr = lemma3_h_trend(stream, 2, 1.0, (0.1, 0.05, 0.025), n3, reps=5)
    rec = _record(cfg, "lemma3_h_trend", "trend", n=2, N=n3, statistic=tr.mean_statistic[-1],
                  decision="pass" if tr.passed else "fail", expected="null",
                  hs=list(tr.hs), mean_statistic=list(tr.mean_statistic), sem=list(tr.sem))
    means = ", ".join(f"h={h:g}: {m:.2e}" for h, m in zip(tr.hs, tr.mean_statistic))
    return CheckResult("lemma3_h_trend", 2, "null", tr.passed, [rec], summary=means)


# ---------------------------------------------------------------------------
# running


def _guarded(name: str, n, expected: str, cfg: RunConfig, fn: Callable[[], object]) -> list[CheckResult]:
    try:
        res = fn()
    except (WindowCapExceeded, ConditioningFailure) as exc:
        rec = _record(cfg, name, "error", n=n, decision="error", expected=expected, error=str(exc))
        return [CheckResult(name, n, expected, False, [rec], error=str(exc), resource_failure=True,
                            summary=f"resource failure: {exc}")]
    return res if isinstance(res, list) else [res]


def run_test_suite(cfg: RunConfig, progress: Callable[[str], None] | None = None) -> list[CheckResult]:
    """Identity checks, plus oracle, moment and lemma checks when no identity filter is set."""
    root = RandomStream(cfg.seed, "recordgrid")
    results = []

    def note(msg):
        if progress:
            progress(msg)

    for name, thunk in identity_checks(cfg):
        note(name)
        expected = "reject" if name.startswith("negcontrol") else "null"
        results += _guarded(name, None, expected, cfg, lambda: thunk(cfg, root.spawn(name)))
    if not cfg.identities:
        results += run_oracle_checks(cfg, progress, include_window=False)
        note("moments")
        results += _guarded("moments", None, "target", cfg,
                            lambda: moment_checks(cfg, root.spawn("moments")))
        for name, thunk in lemma_checks(cfg):
            note(name)
            results += _guarded(name, None, "null", cfg, lambda: thunk(cfg, root.spawn(name)))
    return results


def run_oracle_checks(cfg: RunConfig, progress=None, include_window: bool = True) -> list[CheckResult]:
    """Geometric chain matrices vs the closed form, reflection and C00/C11 checks."""
    root = RandomStream(cfg.seed, "recordgrid")
    stats = _WindowStats()
    checks = [(f"oracle_geometric_n{n}", _geometric_vs_closed(n, stats)) for n in cfg.ns]
    checks += [("eq5_reflection", _eq5_reflection(1, stats)),
               ("eq5_reflection_shift0", _eq5_reflection(0, stats)),
               ("oracle_c00_vs_c11", _c00_vs_c11(stats))]
    results = []
    for name, make in checks:
        if progress:
            progress(name)
        expected = "reject" if name == "oracle_c00_vs_c11" else "null"
        results += _guarded(name, None, expected, cfg, lambda: make(cfg, root.spawn(name)))
    if progress:
        progress("markov_transition")
    results += _guarded("markov_transition", 1, "null", cfg,
                        lambda: markov_transition_check(cfg, root.spawn("markov_transition"), stats))
    if include_window:
        results.append(CheckResult("window_expansion", None, "info", True, [stats.record(cfg)],
                                   summary=f"max side {stats.max_side:g}"))
    return results


def exit_status(results: list[CheckResult]) -> int:
    if any(r.resource_failure for r in results):
        return 3
    return 0 if all(r.passed for r in results) else 1


_KIND_ORDER = {"test": 0, "summary": 1, "moment": 1, "trend": 1, "error": 1, "window_stats": 1}


def format_report(results: list[CheckResult]) -> str:
    """JSON line per record, sorted by check then replicate; ``#`` summary table last."""
    records = [rec for r in results for rec in r.records]
    records.sort(key=lambda r: (r["check"], _KIND_ORDER.get(r["kind"], 2),
                                -1 if r["replicate"] is None else r["replicate"]))
    buf = io.StringIO()
    for rec in records:
        ordered = {k: rec[k] for k in RECORD_KEYS}
        if "detail" in rec:
            ordered["detail"] = rec["detail"]
        buf.write(json.dumps(ordered, allow_nan=False, default=_jsonable) + "\n")
    buf.write("# " + "-" * 76 + "\n")
    buf.write(f"# {'check':<32} {'expected':<8} {'result':<6} detail\n")
    for r in sorted(results, key=lambda r: r.name):
        status = "ok" if r.passed else ("ERROR" if r.error else "FAIL")
        buf.write(f"# {r.name:<32} {r.expected:<8} {status:<6} {r.summary}\n")
    failed = sum(not r.passed for r in results)
    buf.write(f"# {len(results) - failed}/{len(results)} checks passed\n")
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not serializable: {type(obj)}")


def write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n", encoding="ascii") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def samples_csv(rows: np.ndarray) -> str:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[:, None]
    buf = io.StringIO()
    buf.write("draw," + ",".join(f"c_{j + 1}" for j in range(rows.shape[1])) + "\n")
    for i, row in enumerate(rows, 1):
        buf.write(f"{i}," + ",".join(format(float(v), ".17g") for v in row) + "\n")
    return buf.getvalue()


def write_samples_csv(path: Path, rows: np.ndarray) -> None:
    write_text(path, samples_csv(rows))


def sample_targets(cfg: RunConfig) -> list[IdentitySpec]:
    """Catalog entries selected by the config, one per (name, order)."""
    names = []
    if cfg.identities:
        for ident in cfg.identities:
            if ident in IDENTITY_NAMES:
                names.append(ident)
            else:
                pair = identity_pair(_family_of(ident), 1)
                names += [pair.lhs.name, pair.rhs.name]
    else:
        names = list(IDENTITY_NAMES)
    specs = []
    for name in dict.fromkeys(names):
        orders = {IdentitySpec(name, n).n for n in cfg.ns}
        specs += [IdentitySpec(name, n) for n in sorted(orders)]
    return specs


def run_sample(cfg: RunConfig) -> list[Path]:
    root = RandomStream(cfg.seed, "recordgrid")
    paths = []
    for spec in sample_targets(cfg):
        fixed = IdentitySpec(spec.name, 99).n != 99
        fname = f"{spec.name}.csv" if fixed else f"{spec.name}_n{spec.n}.csv"
        batch = sample_identity(spec, root.spawn(f"sample/{spec.name}", spec.n), cfg.N)
        path = cfg.out / fname
        write_samples_csv(path, batch.rows)
        paths.append(path)
    return paths


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
