"""
CLI Module

Command-line front end: enumerate, eval, group, verify, golden and
render. Results go to stdout (or --out), diagnostics to stderr.

Exit codes: 0 success, 1 verification failure, 2 input error.
"""

import argparse
import asyncio
import json
import logging
import sys
from dataclasses import dataclass
from functools import partial
from typing import List, Optional, Sequence

try:
    from mbdiag.config import configure_logging, get_settings
    from mbdiag.diagram_gen import HEFF_ORDERS, OEFF_ORDERS, enumerate_heff, enumerate_oeff
    from mbdiag.diagram_ir import HEFF, OEFF, Diagram, canonical_key, render_dot, render_text, validate_diagram
    from mbdiag.errors import MbdiagError
    from mbdiag.eval_engine import evaluate_order_sum
    from mbdiag.golden import run_golden
    from mbdiag.model_core import ModelInstance, OperatorTensor, load_model, random_model, tensor_to_dict
    from mbdiag.oracle import bloch_heff, compare_tensors
    from mbdiag.transform import evaluate_group, group_skeletons
except ImportError:
    from config import configure_logging, get_settings
    from diagram_gen import HEFF_ORDERS, OEFF_ORDERS, enumerate_heff, enumerate_oeff
    from diagram_ir import HEFF, OEFF, Diagram, canonical_key, render_dot, render_text, validate_diagram
    from errors import MbdiagError
    from eval_engine import evaluate_order_sum
    from golden import run_golden
    from model_core import ModelInstance, OperatorTensor, load_model, random_model, tensor_to_dict
    from oracle import bloch_heff, compare_tensors
    from transform import evaluate_group, group_skeletons

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
COMMANDS = ("enumerate", "eval", "group", "verify", "golden", "render")
RENDER_FORMATS = ("text", "dot")

# Default pass thresholds per effective Hamiltonian order
VERIFY_TOLERANCES = {1: 1e-12, 2: 1e-10, 3: 1e-9}

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2


@dataclass(frozen=True)
class RunConfig:
    """One CLI invocation."""

    command: str
    model_path: Optional[str] = None
    target: str = HEFF
    order: int = 1
    seed: int = 0
    seed_sweep: int = 0
    output: Optional[str] = None
    render: Optional[str] = None
    diagram_path: Optional[str] = None
    tolerance: Optional[float] = None
    workers: Optional[int] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise MbdiagError(f"unknown command {self.command!r}")
        if self.target not in (HEFF, OEFF):
            raise MbdiagError(f"unknown target {self.target!r}")
        orders = HEFF_ORDERS if self.target == HEFF or self.command == "verify" else OEFF_ORDERS
        if self.command in ("enumerate", "eval", "group", "verify") and self.order not in orders:
            raise MbdiagError(f"order {self.order} outside {orders} for {self.target}")
        if self.tolerance is not None and self.tolerance <= 0:
            raise MbdiagError("tolerance must be > 0")
        if self.seed_sweep < 0:
            raise MbdiagError("seed sweep must be >= 0")
        if self.render is not None and self.render not in RENDER_FORMATS:
            raise MbdiagError(f"unknown render format {self.render!r}")
        if self.command in ("enumerate", "eval", "group", "verify") and not self.model_path:
            raise MbdiagError(f"{self.command} needs --model")
        if self.command == "render" and not self.diagram_path:
            raise MbdiagError("render needs --diagram")


def sig15(value):
    """Round every float in a nested report to 15 significant digits."""
    if isinstance(value, bool):
        return value
    if isinstance(value, float):
        return float(f"{value:.15g}")
    if isinstance(value, dict):
        return {k: sig15(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sig15(v) for v in value]
    return value


def dumps(report) -> str:
    return json.dumps(sig15(report), indent=2, ensure_ascii=False)


def _emit(text: str, output: Optional[str]) -> None:
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _enumerate(target: str, order: int, m: ModelInstance) -> List[Diagram]:
    return enumerate_heff(order, m) if target == HEFF else enumerate_oeff(order, m)


def _render(d: Diagram, fmt: Optional[str]) -> str:
    return render_dot(d) if fmt == "dot" else render_text(d)


def cmd_enumerate(config: RunConfig) -> int:
    m = load_model(config.model_path)
    diagrams = _enumerate(config.target, config.order, m)
    lines = [f"{len(diagrams)} {config.target} diagrams of order {config.order}"]
    for d in diagrams:
        lines.append(canonical_key(d))
        if config.render:
            lines.append(_render(d, config.render))
    _emit("\n".join(lines), config.output)
    return EXIT_OK


def _tensors_report(parts: Sequence[OperatorTensor]) -> List[dict]:
    return [tensor_to_dict(p) for p in sorted(parts, key=lambda p: p.rank)]


def cmd_eval(config: RunConfig) -> int:
    m = load_model(config.model_path)
    total = evaluate_order_sum(config.target, config.order, m, workers=config.workers)
    report = {
        "schema_version": SCHEMA_VERSION,
        "target": config.target,
        "order": config.order,
        "tensors": _tensors_report(total.parts),
    }
    _emit(dumps(report), config.output)
    return EXIT_OK


def cmd_group(config: RunConfig) -> int:
    m = load_model(config.model_path)
    diagrams = _enumerate(config.target, config.order, m)
    groups = group_skeletons(diagrams, m)
    lines = [f"{len(groups)} skeleton groups from {len(diagrams)} diagrams"]
    for g in groups:
        value = evaluate_group(g, m)
        sizes = ", ".join(f"rank {p.rank}: {p.max_abs():.15g}" for p in sorted(value.parts, key=lambda p: p.rank))
        lines.append(f"{len(g.members)} members  max|value| {sizes or '0'}")
        lines.extend("  " + entry for entry in g.notation())
    _emit("\n".join(lines), config.output)
    return EXIT_OK


def sweep_models(m: ModelInstance, seed: int, count: int) -> List[ModelInstance]:
    """The given model followed by `count` random models of the same shape."""
    models = [m]
    for k in range(count):
        models.append(
            random_model(
                seed + k,
                len(m.core),
                len(m.valence),
                len(m.virtual),
                m.valence_electrons,
                v_ranks=tuple(m.v_ranks),
                o_rank=m.O.rank,
                lam=m.lam,
            )
        )
    return models


def verify_model(m: ModelInstance, max_order: int, workers: Optional[int] = None) -> List[float]:
    """Relative error of each diagram order against the Bloch oracle."""
    errors = []
    for k in range(1, max_order + 1):
        total = evaluate_order_sum(HEFF, k, m, workers=workers)
        errors.append(compare_tensors(total, bloch_heff(k, m), m))
    return errors


async def verify_models_async(
    models: Sequence[ModelInstance], max_order: int, workers: Optional[int] = None
) -> List[List[float]]:
    """Verify several models concurrently, results in input order."""
    semaphore = asyncio.Semaphore(workers or get_settings().workers)
    loop = asyncio.get_running_loop()

    async def one(m):
        async with semaphore:
            return await loop.run_in_executor(None, partial(verify_model, m, max_order, 1))

    return list(await asyncio.gather(*(one(m) for m in models)))


def cmd_verify(config: RunConfig) -> int:
    base = load_model(config.model_path)
    models = sweep_models(base, config.seed, config.seed_sweep)
    logger.info("[Verifying %d model(s) up to order %d ...]", len(models), config.order)
    if len(models) == 1:
        errors = [verify_model(base, config.order, config.workers)]
    else:
        errors = asyncio.run(verify_models_async(models, config.order, config.workers))
    orders = {}
    for k in range(1, config.order + 1):
        worst = max(e[k - 1] for e in errors)
        tol = config.tolerance if config.tolerance is not None else VERIFY_TOLERANCES[k]
        orders[str(k)] = {"max_rel_error": worst, "pass": worst <= tol}
    report = {
        "schema_version": SCHEMA_VERSION,
        "model": config.model_path,
        "orders": orders,
        "seeds": list(range(config.seed, config.seed + config.seed_sweep)),
        "pass": all(o["pass"] for o in orders.values()),
    }
    _emit(dumps(report), config.output)
    return EXIT_OK if report["pass"] else EXIT_FAILED


def cmd_golden(config: RunConfig) -> int:
    report = run_golden()
    _emit(dumps(report), config.output)
    return EXIT_OK if report["pass"] else EXIT_FAILED


def cmd_render(config: RunConfig) -> int:
    with open(config.diagram_path, encoding="utf-8") as fh:
        d = Diagram.from_json(fh.read())
    problems = validate_diagram(d)
    if problems:
        raise MbdiagError("invalid diagram: " + "; ".join(problems))
    _emit(_render(d, config.render), config.output)
    return EXIT_OK


HANDLERS = {
    "enumerate": cmd_enumerate,
    "eval": cmd_eval,
    "group": cmd_group,
    "verify": cmd_verify,
    "golden": cmd_golden,
    "render": cmd_render,
}


def run(config: RunConfig) -> int:
    """Dispatch one command and map failures to exit codes."""
    try:
        return HANDLERS[config.command](config)
    except MbdiagError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mbdiag",
        description="Goldstone diagram engine for effective Hamiltonians and transition operators.",
    )
    parser.add_argument("--log-level", default=None, help="Logging level (default: MBDIAG_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True, target=True):
        if model:
            p.add_argument("--model", dest="model_path", required=True, help="Model JSON file")
        if target:
            p.add_argument("--target", choices=(HEFF, OEFF), default=HEFF)
        p.add_argument("--out", dest="output", default=None, help="Write output here instead of stdout")
        p.add_argument("--workers", type=int, default=None, help="Concurrent evaluations")

    p = sub.add_parser("enumerate", help="List linked diagrams of one order")
    common(p)
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--render", choices=RENDER_FORMATS, default=None)

    p = sub.add_parser("eval", help="Evaluate one order on a model")
    common(p)
    p.add_argument("--order", type=int, required=True)

    p = sub.add_parser("group", help="Group diagrams by skeleton")
    common(p)
    p.add_argument("--order", type=int, required=True)

    p = sub.add_parser("verify", help="Compare diagram sums with the Bloch oracle")
    common(p, target=False)
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seed-sweep", type=int, default=0, help="Extra random models of the same shape")
    p.add_argument("--tolerance", type=float, default=None)

    p = sub.add_parser("golden", help="Run the reference diagram checks")
    common(p, model=False, target=False)

    p = sub.add_parser("render", help="Render a diagram file")
    common(p, model=False, target=False)
    p.add_argument("--diagram", dest="diagram_path", required=True)
    p.add_argument("--render", choices=RENDER_FORMATS, default="text")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    fields = set(RunConfig.__dataclass_fields__)
    return RunConfig(**{k: v for k, v in vars(args).items() if k in fields and v is not None})


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging(args.log_level)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    try:
        config = config_from_args(args)
    except MbdiagError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
