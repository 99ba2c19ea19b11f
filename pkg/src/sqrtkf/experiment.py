"""Rank-deficiency experiment and command-line entry point.

Sweeps the observation-noise family V(alpha) = diag(1, alpha^2) for a
small 4-state / 2-observation model, computing the log-marginal
likelihood, its forward-mode tangent in alpha, and a finite-difference
check at each grid point, then writes a CSV table and (optionally) a
self-contained SVG of the curve with tangent arrows. A separate mode
demonstrates the classical QR tangent failing on the rank-deficient
update matrix at alpha = 0 while the surrogate stays exact.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from .filtering import FilterState, ModelParams, load_model_config, predict, run_filter
from .forward import DualModelParams, filter_jvp
from .linalg import as_matrix
from .oracles import classical_qr_jvp
from .triangularize import gramian_residual, jvp_triangularize, triangularize

DEFAULT_HORIZON = 50
DEFAULT_FD_STEP = 1e-6
DEFAULT_ALPHA_COUNT = 21

CSV_HEADER = "alpha,loglik,ad_grad,fd_grad"


@dataclass(frozen=True)
class ExperimentConfig:
    alpha_grid: tuple = tuple(np.linspace(0.0, 1.0, DEFAULT_ALPHA_COUNT))
    horizon: int = DEFAULT_HORIZON
    x0: np.ndarray | None = None
    s0: np.ndarray | None = None
    fd_step: float = DEFAULT_FD_STEP
    output_path: str = "experiment.csv"
    emit_plot: bool = False
    seed: int = 0  # reserved; observations are deterministic zeros

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        for alpha in self.alpha_grid:
            if not 0.0 <= alpha <= 1.0:
                raise ValueError(f"alpha {alpha} outside [0, 1]")


@dataclass(frozen=True)
class ResultRow:
    alpha: float
    loglik: float
    ad_grad: float
    fd_grad: float


def build_section5_model(alpha: float, cfg: ExperimentConfig = ExperimentConfig()) -> ModelParams:
    """4-state model with V^{1/2}(alpha) = diag(1, alpha): A = 0.9 I,
    U^{1/2} = 0.1 I, B = [I2 0]; alpha sweeps full-rank to rank-one noise."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    return _build_model(alpha, cfg)


def _build_model(alpha: float, cfg: ExperimentConfig) -> ModelParams:
    # No range check: FD probes may step just outside [0, 1].
    x0 = np.zeros((4, 1)) if cfg.x0 is None else as_matrix(cfg.x0, 4, 1)
    s0 = np.eye(4) if cfg.s0 is None else as_matrix(cfg.s0, 4, 4)
    return ModelParams(
        a=0.9 * np.eye(4),
        b=np.hstack([np.eye(2), np.zeros((2, 2))]),
        u_sqrt=0.1 * np.eye(4),
        v_sqrt=np.diag([1.0, float(alpha)]),
        x0=x0,
        s0=s0,
    )


def _zero_observations(cfg: ExperimentConfig) -> list[np.ndarray]:
    return [np.zeros((2, 1)) for _ in range(cfg.horizon)]


def _loglik(alpha: float, cfg: ExperimentConfig, observations) -> float:
    _, total = run_filter(_build_model(alpha, cfg), observations)
    return total


def _ad_tangent(alpha: float, cfg: ExperimentConfig, observations) -> float:
    duals = DualModelParams.from_params(
        build_section5_model(alpha, cfg),
        {"v_sqrt": np.diag([0.0, 1.0])},  # d/d(alpha) of diag(1, alpha)
    )
    _, d_total, _ = filter_jvp(duals, observations)
    return d_total


def _fd_tangent(alpha: float, cfg: ExperimentConfig, observations) -> float:
    """Central difference in alpha; one-sided at the domain boundaries."""
    h = cfg.fd_step
    if alpha - h < 0.0:
        return (_loglik(alpha + h, cfg, observations) - _loglik(alpha, cfg, observations)) / h
    if alpha + h > 1.0:
        return (_loglik(alpha, cfg, observations) - _loglik(alpha - h, cfg, observations)) / h
    return (
        _loglik(alpha + h, cfg, observations) - _loglik(alpha - h, cfg, observations)
    ) / (2.0 * h)


def run_experiment(cfg: ExperimentConfig = ExperimentConfig()) -> list[ResultRow]:
    observations = _zero_observations(cfg)
    rows = []
    for alpha in sorted(cfg.alpha_grid):
        rows.append(
            ResultRow(
                alpha=float(alpha),
                loglik=_loglik(alpha, cfg, observations),
                ad_grad=_ad_tangent(alpha, cfg, observations),
                fd_grad=_fd_tangent(alpha, cfg, observations),
            )
        )
    return rows


# -- naive-QR failure demonstration ------------------------------------------


@dataclass(frozen=True)
class FailureReport:
    """Classical vs surrogate tangent of the first update-step
    triangularization, differentiated in alpha."""

    alpha: float
    surrogate_residual: float
    surrogate_norm: float
    classical_status: str  # "ok" | "non-finite" | "singular-matrix-error"
    classical_residual: float
    classical_norm: float

    @property
    def classical_invalid(self) -> bool:
        if self.classical_status != "ok":
            return True
        return self.classical_residual > 1e3 * max(self.surrogate_residual, 1e-300)


def failure_demo_at(alpha: float, cfg: ExperimentConfig = ExperimentConfig()) -> FailureReport:
    params = build_section5_model(alpha, cfg)
    pred = predict(FilterState(mean=params.x0, factor=params.s0), params.a, params.u_sqrt)
    s = pred.factor
    d_y, d_x = params.b.shape
    m_upd = np.block([
        [params.b @ s, params.v_sqrt],
        [s, np.zeros((d_x, d_y))],
    ])
    dm = np.block([
        [np.zeros((d_y, d_x)), np.diag([0.0, 1.0])],
        [np.zeros((d_x, d_x)), np.zeros((d_x, d_y))],
    ])
    res = triangularize(m_upd)
    dl = jvp_triangularize(res, dm)
    surrogate_residual = gramian_residual(m_upd, dm, res.l, dl)

    try:
        dl_classical = classical_qr_jvp(res, dm)
    except np.linalg.LinAlgError:
        return FailureReport(
            alpha=alpha,
            surrogate_residual=surrogate_residual,
            surrogate_norm=float(np.linalg.norm(dl)),
            classical_status="singular-matrix-error",
            classical_residual=float("nan"),
            classical_norm=float("nan"),
        )
    status = "ok" if np.all(np.isfinite(dl_classical)) else "non-finite"
    classical_residual = (
        gramian_residual(m_upd, dm, res.l, dl_classical) if status == "ok" else float("nan")
    )
    return FailureReport(
        alpha=alpha,
        surrogate_residual=surrogate_residual,
        surrogate_norm=float(np.linalg.norm(dl)),
        classical_status=status,
        classical_residual=classical_residual,
        classical_norm=float(np.linalg.norm(dl_classical)) if status == "ok" else float("nan"),
    )


def run_failure_demo(
    cfg: ExperimentConfig = ExperimentConfig(), alphas=(0.0, 1e-8, 1.0)
) -> list[FailureReport]:
    return [failure_demo_at(alpha, cfg) for alpha in alphas]


# -- output files -------------------------------------------------------------


def emit_outputs(table: list[ResultRow], cfg: ExperimentConfig) -> list[str]:
    """Write the CSV (and the SVG plot when requested); returns the paths.

    CSV layout: one `#` comment line recording the configuration, then
    the fixed header and one full-precision row per grid point. Identical
    configs produce byte-identical files.
    """
    if not table:
        raise ValueError("empty result table")
    paths = [cfg.output_path]
    lines = [
        f"# horizon={cfg.horizon} fd_step={cfg.fd_step!r} "
        f"x0={'override' if cfg.x0 is not None else 'zeros'} "
        f"s0={'override' if cfg.s0 is not None else 'identity'}",
        CSV_HEADER,
    ]
    for row in table:
        lines.append(f"{row.alpha!r},{row.loglik!r},{row.ad_grad!r},{row.fd_grad!r}")
    try:
        with open(cfg.output_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV to {cfg.output_path}: {exc}") from exc
    if cfg.emit_plot:
        plot_path = _plot_path(cfg.output_path)
        _emit_plot(table, plot_path)
        paths.append(plot_path)
    return paths


def _plot_path(csv_path: str) -> str:
    return (csv_path[:-4] if csv_path.endswith(".csv") else csv_path) + ".svg"


def _emit_plot(table: list[ResultRow], path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    alphas = [r.alpha for r in table]
    logliks = [r.loglik for r in table]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(alphas, logliks, lw=1.5, color="C0", label="log-marginal likelihood")
    arm = 0.5 * (alphas[-1] - alphas[0]) / max(len(table) - 1, 1)
    for r in table:
        ax.annotate(
            "",
            xy=(r.alpha + arm, r.loglik + arm * r.ad_grad),
            xytext=(r.alpha - arm, r.loglik - arm * r.ad_grad),
            arrowprops=dict(arrowstyle="->", color="C3", lw=1.0),
        )
    ax.set_xlabel("alpha")
    ax.set_ylabel("log-likelihood")
    ax.set_title("Likelihood vs alpha with forward-mode tangents")
    ax.margins(y=0.1)
    ax.legend(loc="best")
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg")
    finally:
        plt.close(fig)


def load_results_csv(path: str) -> list[ResultRow]:
    """Inverse of emit_outputs for the CSV part (exact round trip)."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line == CSV_HEADER:
                continue
            alpha, loglik, ad, fd = (float(tok) for tok in line.split(","))
            rows.append(ResultRow(alpha=alpha, loglik=loglik, ad_grad=ad, fd_grad=fd))
    return rows


# -- CLI ----------------------------------------------------------------------


def _parse_alphas(text: str) -> tuple:
    if "," in text or "." in text:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    count = int(text)
    if count < 2:
        raise ValueError("alpha count must be >= 2")
    return tuple(np.linspace(0.0, 1.0, count))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqrtkf-experiment",
        description="Sweep V(alpha) = diag(1, alpha^2): likelihood, AD and FD "
        "tangents, CSV/plot output; or run the naive-QR failure demo.",
    )
    parser.add_argument(
        "--alphas",
        default=str(DEFAULT_ALPHA_COUNT),
        help="comma-separated alpha values, or an integer count of uniform "
        "points on [0,1] (default: %(default)s)",
    )
    parser.add_argument("--horizon", type=int, default=DEFAULT_HORIZON, metavar="T")
    parser.add_argument("--fd-step", type=float, default=DEFAULT_FD_STEP, metavar="H")
    parser.add_argument("--output", default="experiment.csv", metavar="PATH")
    parser.add_argument("--emit-plot", action="store_true", help="also write an SVG plot")
    parser.add_argument(
        "--failure-demo",
        action="store_true",
        help="report classical vs surrogate tangents at alpha = 0, 1e-8, 1",
    )
    parser.add_argument(
        "--config",
        metavar="MODEL_FILE",
        help="run the square-root filter on a model configuration file and "
        "print its log-marginal likelihood instead of sweeping alpha",
    )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.config:
            params, observations = load_model_config(args.config)
            _, total = run_filter(params, observations)
            print(f"total_loglik={total!r}")
            return 0
        cfg = ExperimentConfig(
            alpha_grid=_parse_alphas(args.alphas),
            horizon=args.horizon,
            fd_step=args.fd_step,
            output_path=args.output,
            emit_plot=args.emit_plot,
        )
        if args.failure_demo:
            for report in run_failure_demo(cfg):
                verdict = "INVALID" if report.classical_invalid else "ok"
                print(
                    f"alpha={report.alpha:g} classical={report.classical_status}"
                    f" ({verdict}) classical_residual={report.classical_residual:g}"
                    f" surrogate_residual={report.surrogate_residual:g}"
                )
            return 0
        table = run_experiment(cfg)
        for path in emit_outputs(table, cfg):
            print(f"wrote {path}")
        return 0
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
