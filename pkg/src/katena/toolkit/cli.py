"""Command-line entry point.

Exit codes: 0 ok, 1 validation failure, 2 plan or execution error,
3 backend or secrets error, 4 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

from katena import __version__
from katena.chain import MockChain, RpcBackend, load_secrets, resolve_secret
from katena.chain.base import ChainBackend
from katena.errors import (
    ArtifactError,
    ChainError,
    KatenaError,
    ModelError,
    PlanError,
    SecretsError,
)
from katena.graph import build_dependency_graph, deployment_plan, destroy_plan, upgrade_plan
from katena.model import ArtifactStore, load_inputs, parse_model, validate_model
from katena.model.types import NETWORKS, DeploymentModel, Kind
from katena.orchestrator import DeploymentRecord, ExecutionReport, Orchestrator, record_path_for
from katena.toolkit.metrics import LANGUAGES, count_file

EXIT_OK, EXIT_INVALID, EXIT_PLAN, EXIT_BACKEND, EXIT_USAGE = 0, 1, 2, 3, 4
MOCK_STATE_SUFFIX = ".katena-mock.json"

EPILOG = """\
exit codes:
  0  success
  1  validation failure (model or artifacts violate a constraint)
  2  plan or execution error (dependency cycle, refused destroy, halted run)
  3  backend error (endpoint unreachable, transaction failed, secrets)
  4  usage error (bad arguments, missing files, no record for upgrade/destroy)

environment:
  KATENA_SECRETS  path of the secrets file; overrides --secrets
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS lets the flags appear before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--model", metavar="PATH", default=S, help="deployment model YAML")
    common.add_argument("--inputs", metavar="PATH", default=S, help="YAML mapping of model inputs")
    common.add_argument("--secrets", metavar="PATH", default=S, help="YAML secrets file (mode 600)")
    common.add_argument("--artifacts", metavar="DIR", default=S, help="artifact directory (default: <model dir>/artifacts)")
    common.add_argument("--backend", choices=("mock", "rpc"), default=S, help="chain backend (default: mock)")
    common.add_argument("--rpc-url", metavar="URL", default=S, help="override the model's network endpoint")
    common.add_argument("--parallel", action="store_true", default=S, help="run steps of one layer concurrently")
    common.add_argument("--json", action="store_true", default=S, help="machine-readable output")
    common.add_argument("-v", "--verbose", action="store_true", default=S, help="log progress to stderr")
    return common


DEFAULTS: dict[str, Any] = {
    "model": None,
    "inputs": None,
    "secrets": None,
    "artifacts": None,
    "backend": "mock",
    "rpc_url": None,
    "parallel": False,
    "json": False,
    "verbose": False,
}


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = _Parser(
        prog="katena",
        description="Plan, deploy, upgrade and destroy blockchain applications described by a YAML model.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    sub.add_parser("validate", parents=[common], help="check the model and its artifacts")
    sub.add_parser("plan", parents=[common], help="print the layered deployment plan")
    sub.add_parser("deploy", parents=[common], help="execute the deployment plan")
    up = sub.add_parser("upgrade", parents=[common], help="redeploy a node and everything hard-depending on it")
    up.add_argument("node")
    down = sub.add_parser("destroy", parents=[common], help="detach and destroy a node")
    down.add_argument("node")
    rec = sub.add_parser("record", parents=[common], help="inspect the deployment record")
    rec.add_argument("action", choices=("show",))
    met = sub.add_parser("metrics", parents=[common], help="effort metrics")
    met.add_argument("metric", choices=("not",), help="not: number of tokens")
    met.add_argument("file")
    met.add_argument("--lang", choices=LANGUAGES, default=None, help="language mode (default: from extension)")
    return parser


# -- helpers -------------------------------------------------------------------


def _emit(args, data: Any, text: str | None = None) -> None:
    if args.json or text is None:
        print(json.dumps(data, sort_keys=True, indent=2))
    else:
        print(text)


def _load_model(args) -> DeploymentModel:
    if not args.model:
        raise UsageError("--model is required for this command")
    path = Path(args.model)
    if not path.is_file():
        raise UsageError(f"model file {path} not found")
    inputs = load_inputs(args.inputs) if args.inputs else {}
    return parse_model(path.read_text(encoding="utf-8"), inputs)


def _artifacts(args) -> ArtifactStore:
    directory = Path(args.artifacts) if args.artifacts else Path(args.model).parent / "artifacts"
    return ArtifactStore(directory)


def _mock_state_path(args) -> Path:
    model = Path(args.model)
    return model.with_name(model.stem + MOCK_STATE_SUFFIX)


def _backend(args, model: DeploymentModel, secrets: dict) -> ChainBackend:
    if args.backend == "mock":
        state = _mock_state_path(args)
        if state.exists():
            return MockChain.from_dict(json.loads(state.read_text(encoding="utf-8")))
        return MockChain()
    if args.rpc_url:
        return RpcBackend(args.rpc_url)
    networks = sorted({model.network_of(n).name for n in model if n.deployable and model.network_of(n)})
    if len(networks) != 1:
        raise UsageError(f"expected one network for on-chain nodes, found {len(networks)}; pass --rpc-url")
    net = model[networks[0]]
    secret = None
    if net.kind is Kind.NODE_SERVICE_PROVIDER:
        secret = resolve_secret(net.properties["secret"], secrets, model.inputs, f"{net.name}.secret")
    return RpcBackend.from_network(net, secret)


def _save_backend(args, backend: ChainBackend) -> None:
    if isinstance(backend, MockChain):
        _mock_state_path(args).write_text(json.dumps(backend.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _validated(args, model: DeploymentModel) -> tuple[ArtifactStore, int | None]:
    store = _artifacts(args)
    report = validate_model(model, store)
    if not report.ok:
        _print_validation(args, report)
        return store, EXIT_INVALID
    return store, None


def _print_validation(args, report) -> None:
    lines = [f"error [{v.code}] {v.message}" for v in report.violations]
    lines += [f"warning [{w.code}] {w.message}" for w in report.warnings]
    lines.append("model is valid" if report.ok else f"{len(report.violations)} violation(s)")
    _emit(args, report.to_dict(), "\n".join(lines))


def _record(args, model: DeploymentModel, must_exist: bool) -> DeploymentRecord:
    path = record_path_for(args.model)
    if must_exist and not path.exists():
        raise UsageError(f"no deployment record at {path}; run deploy first")
    record = DeploymentRecord.load(path)
    if not record.model_hash:
        record.model_hash = model.source_hash
    return record


def _finish(args, report: ExecutionReport, backend: ChainBackend) -> int:
    _save_backend(args, backend)
    text_lines = [f"{o.index:3d} {o.status:8s} {o.step}" + (f"  ({o.error})" if o.error else "") for o in report.outcomes]
    text_lines.append(
        f"{report.operation}: {report.succeeded} executed, {report.count('skipped')} skipped, {report.failed} failed"
    )
    if report.error:
        text_lines.append(f"error: {report.error}")
    _emit(args, report.to_dict(), "\n".join(text_lines))
    if report.ok:
        return EXIT_OK
    return _code_for(report.exception)


def _code_for(exc: BaseException | None) -> int:
    if isinstance(exc, (ChainError, SecretsError)):
        return EXIT_BACKEND
    if isinstance(exc, (ModelError, ArtifactError)):
        return EXIT_INVALID
    return EXIT_PLAN


# -- commands ------------------------------------------------------------------


def cmd_validate(args) -> int:
    model = _load_model(args)
    report = validate_model(model, _artifacts(args))
    _print_validation(args, report)
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_plan(args) -> int:
    model = _load_model(args)
    plan = deployment_plan(build_dependency_graph(model), model)
    print(plan.to_json())
    return EXIT_OK


def _orchestrator(args, model, store, record, backend, secrets) -> Orchestrator:
    return Orchestrator(model, backend, store, record, secrets=secrets, parallel=args.parallel)


def cmd_deploy(args) -> int:
    model = _load_model(args)
    store, failed = _validated(args, model)
    if failed is not None:
        return failed
    plan = deployment_plan(build_dependency_graph(model), model)
    secrets = load_secrets(args.secrets)
    backend = _backend(args, model, secrets)
    record = _record(args, model, must_exist=False)
    report = _orchestrator(args, model, store, record, backend, secrets).deploy(plan)
    return _finish(args, report, backend)


def cmd_upgrade(args) -> int:
    model = _load_model(args)
    record = _record(args, model, must_exist=True)
    store, failed = _validated(args, model)
    if failed is not None:
        return failed
    plan = upgrade_plan(build_dependency_graph(model), model, args.node)
    secrets = load_secrets(args.secrets)
    backend = _backend(args, model, secrets)
    report = _orchestrator(args, model, store, record, backend, secrets).upgrade(plan)
    return _finish(args, report, backend)


def cmd_destroy(args) -> int:
    model = _load_model(args)
    record = _record(args, model, must_exist=True)
    store = _artifacts(args)
    steps = destroy_plan(build_dependency_graph(model), model, args.node, record.destroyed())
    secrets = load_secrets(args.secrets)
    backend = _backend(args, model, secrets)
    report = _orchestrator(args, model, store, record, backend, secrets).destroy(steps)
    return _finish(args, report, backend)


def cmd_record(args) -> int:
    model = _load_model(args)
    record = _record(args, model, must_exist=True)
    print(json.dumps(record.to_dict(), sort_keys=True, indent=2))
    return EXIT_OK


def cmd_metrics(args) -> int:
    path = Path(args.file)
    if not path.is_file():
        raise UsageError(f"file {path} not found")
    try:
        result = count_file(path, args.lang)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit(args, result.to_dict(), f"{result.file}: {result.tokens} tokens ({result.language})")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "plan": cmd_plan,
    "deploy": cmd_deploy,
    "upgrade": cmd_upgrade,
    "destroy": cmd_destroy,
    "record": cmd_record,
    "metrics": cmd_metrics,
}


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    for key, value in DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"katena: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, ArtifactError) as exc:
        print(f"katena: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except PlanError as exc:
        print(f"katena: {exc}", file=sys.stderr)
        return EXIT_PLAN
    except (ChainError, SecretsError) as exc:
        print(f"katena: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except KatenaError as exc:
        print(f"katena: {exc}", file=sys.stderr)
        return _code_for(exc)


def main() -> None:
    sys.exit(run_cli())
