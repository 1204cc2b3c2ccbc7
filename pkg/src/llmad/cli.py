"""Command-line entry point: ``llmad {detect,synth,eval,serve-mock,demo}``.

Settings come from built-in defaults, then an optional INI file
(``--config``), then flags.  The API key is read only from the
``LLMAD_API_KEY`` environment variable.

Config file sections and keys::

    [detector]   naming, max_parallel_columns, prompt_text, decimal_places
    [backend]    base_url, model, temperature, top_p, max_retries, timeout,
                 provider_defaults
    [benchmark]  max_rows, max_cols, seeds, k
    [synth]      train, val, seed, n_low, n_high, pi_low, pi_high, mu_low,
                 mu_high, sigma_low, sigma_high, m_low, m_high, alpha
    [demo]       batches, batch_size, seed

Exit status: 0 success, 1 fatal error, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import glob
import logging
import sys
from dataclasses import fields
from pathlib import Path

from llmad.backends import BackendConfig, ChatBackend, MockOracleBackend, serve_mock
from llmad.core import DetectorConfig, Naming
from llmad.detector import detect_batch
from llmad.eval import (
    BenchmarkConfig,
    bundled_datasets,
    density_demo,
    ecod_scorer,
    knn_scorer,
    llm_scorer,
    load_csv_dataset,
    run_benchmark,
)
from llmad.synth import GeneratorParams, export_corpus

logger = logging.getLogger("llmad")

EXIT_OK, EXIT_FATAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class Settings:
    """Flag values layered over config-file values layered over defaults."""

    def __init__(self, args: argparse.Namespace, parser: configparser.ConfigParser):
        self.args = args
        self.file = parser

    def get(self, section: str, key: str, default, cast=str, flag: str | None = None):
        value = getattr(self.args, flag or key, None)
        if value is not None:
            return value
        if self.file.has_option(section, key):
            raw = self.file.get(section, key)
            try:
                if cast is bool:
                    return self.file.getboolean(section, key)
                return cast(raw)
            except ValueError as exc:
                raise UsageError(f"config [{section}] {key} = {raw!r}: {exc}") from None
        return default


def _load_config(path: str | None) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    if path:
        if not Path(path).is_file():
            raise UsageError(f"config file not found: {path}")
        parser.read(path, encoding="utf-8")
    return parser


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in str(text).replace(" ", "").split(",") if s]
    except ValueError:
        raise UsageError(f"bad seed list {text!r}; expected e.g. 0,1,2") from None
    if not seeds:
        raise UsageError("at least one seed is required")
    return seeds


def detector_config(s: Settings) -> DetectorConfig:
    try:
        return DetectorConfig(
            naming=Naming.parse(s.get("detector", "naming", "data")),
            max_parallel_columns=s.get("detector", "max_parallel_columns", 4, int, flag="parallel"),
            prompt_text=s.get("detector", "prompt_text", DetectorConfig.prompt_text),
            decimal_places=s.get("detector", "decimal_places", 2, int),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def backend_config(s: Settings) -> BackendConfig:
    try:
        return BackendConfig(
            base_url=s.get("backend", "base_url", BackendConfig.base_url),
            model_name=s.get("backend", "model", BackendConfig.model_name),
            temperature=s.get("backend", "temperature", 0.75, float),
            top_p=s.get("backend", "top_p", 0.9, float),
            max_retries=s.get("backend", "max_retries", 5, int),
            timeout=s.get("backend", "timeout", 60.0, float),
            provider_defaults=s.get("backend", "provider_defaults", False, bool),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def make_backend(kind: str, s: Settings):
    if kind == "mock":
        return MockOracleBackend(detector_config(s).naming)
    return ChatBackend(backend_config(s))


def generator_params(s: Settings) -> GeneratorParams:
    kwargs = {}
    for f in fields(GeneratorParams):
        cast = int if f.type == "int" else float
        kwargs[f.name] = s.get("synth", f.name, f.default, cast)
    try:
        return GeneratorParams(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_detect(args, s: Settings) -> int:
    batch = load_csv_dataset(args.input, label_last=args.label_last)
    backend = make_backend(args.backend, s)
    report = detect_batch(batch, detector_config(s), backend)
    for col, why in report.failures:
        logger.warning("column %d failed: %s", col + 1, why)
    lines = ["row_id,score"]
    lines += [f"{rid},{sc}" for rid, sc in zip(batch.row_ids, report.scores.scores)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args, s: Settings) -> int:
    params = generator_params(s)
    train = s.get("synth", "train", 5000, int)
    val = s.get("synth", "val", 400, int)
    if train % 2 or val % 2 or train < 0 or val < 0:
        raise UsageError("--train and --val must be non-negative even numbers")
    naming = detector_config(s).naming
    counts = export_corpus(args.out_dir, train, val, params, naming)
    print(f"wrote {counts['train']} train and {counts['val']} val records to {args.out_dir}")
    return EXIT_OK


def cmd_eval(args, s: Settings) -> int:
    if args.datasets:
        paths = sorted({p for pattern in args.datasets for p in glob.glob(pattern)})
        if not paths:
            raise UsageError(f"no datasets matched {' '.join(args.datasets)}")
        datasets = {Path(p).stem: Path(p) for p in paths}
    else:
        datasets = bundled_datasets()
    k = s.get("benchmark", "k", 5, int)
    if args.detector == "knn":
        scorer = knn_scorer(k)
    elif args.detector == "ecod":
        scorer = ecod_scorer()
    else:
        backend = make_backend("mock" if args.detector == "mock" else "llm", s)
        scorer = llm_scorer(backend, detector_config(s))
    config = BenchmarkConfig(
        scorer=scorer,
        datasets=datasets,
        max_rows=s.get("benchmark", "max_rows", 150, int),
        max_cols=s.get("benchmark", "max_cols", 10, int),
        seeds=_seeds(s.get("benchmark", "seeds", "0,1,2")),
        label_last=args.label_last,
    )
    result = run_benchmark(config)
    if args.out:
        result.to_csv(args.out)
    sys.stdout.write(result.to_table())
    return EXIT_OK


def cmd_serve_mock(args, s: Settings) -> int:
    naming = detector_config(s).naming
    try:
        server = serve_mock(args.port, naming, host=args.host)
    except OSError as exc:
        logger.error("cannot bind %s:%s: %s", args.host, args.port, exc)
        return EXIT_FATAL
    print(f"mock server listening on {server.base_url}", flush=True)
    try:
        server.thread.join()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return EXIT_OK


def cmd_demo(args, s: Settings) -> int:
    backend = make_backend(args.backend, s)
    report = density_demo(
        backend,
        args.out_dir,
        n_batches=s.get("demo", "batches", 500, int),
        batch_size=s.get("demo", "batch_size", 50, int),
        seed=s.get("demo", "seed", 0, int),
        config=detector_config(s),
    )
    summary = report.summary()
    print(
        f"pooled {summary['n_predictions']} predicted anomalies from {report.n_batches} batches; "
        f"low-density fraction {summary['low_density_fraction']:.3f}; "
        f"KDE integral {summary['kde_integral']:.7f}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, backend: bool = True):
    p.add_argument("--config", help="INI config file (see module docs)")
    p.add_argument("--naming", choices=["data", "row"], help="serialization noun (default data)")
    p.add_argument("-v", "--verbose", action="store_true")
    if backend:
        p.add_argument("--base-url", dest="base_url", help="OpenAI-compatible endpoint, e.g. http://host:port/v1")
        p.add_argument("--model", help="model name sent to the endpoint")
        p.add_argument("--temperature", type=float)
        p.add_argument("--top-p", dest="top_p", type=float)
        p.add_argument("--max-retries", dest="max_retries", type=int)
        p.add_argument("--timeout", type=float, help="request timeout in seconds")
        p.add_argument(
            "--provider-defaults",
            dest="provider_defaults",
            action="store_true",
            default=None,
            help="omit temperature/top_p from requests",
        )
        p.add_argument("--parallel", type=int, help="max concurrent column requests")
        p.add_argument("--decimal-places", dest="decimal_places", type=int)
        p.add_argument("--prompt-text", dest="prompt_text", help="task description appended to the data")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llmad", description="Batch-level anomaly detection with LLM prompting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="score the rows of a CSV table")
    p.add_argument("input", help="input CSV")
    p.add_argument("--backend", choices=["mock", "llm"], default="llm")
    p.add_argument("--out", help="write scores here instead of stdout")
    p.add_argument("--label-last", action="store_true", help="treat the last column as labels")
    _common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("synth", help="export the synthetic fine-tuning corpus as JSONL")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train", type=int, help="training batches (default 5000)")
    p.add_argument("--val", type=int, help="validation batches (default 400)")
    p.add_argument("--seed", type=int)
    _common(p, backend=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="AUROC benchmark over labelled CSVs")
    p.add_argument("datasets", nargs="*", help="CSV paths or globs (default: bundled tables)")
    p.add_argument("--detector", choices=["llm", "mock", "knn", "ecod"], default="mock")
    p.add_argument("--seeds", help="comma-separated seeds (default 0,1,2)")
    p.add_argument("--max-rows", dest="max_rows", type=int)
    p.add_argument("--max-cols", dest="max_cols", type=int)
    p.add_argument("--k", type=int, help="neighbours for --detector knn (default 5)")
    p.add_argument("--out", help="also write results as CSV")
    p.add_argument("--label-last", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve-mock", help="serve the two-sigma mock oracle over HTTP")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    _common(p, backend=False)
    p.set_defaults(func=cmd_serve_mock)

    p = sub.add_parser("demo", help="pooled-prediction density demo")
    p.add_argument("--backend", choices=["mock", "llm"], default="mock")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--batches", type=int, help="number of batches (default 500)")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="points per batch (default 50)")
    p.add_argument("--seed", type=int)
    _common(p)
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        settings = Settings(args, _load_config(args.config))
        return args.func(args, settings)
    except UsageError as exc:
        print(f"llmad: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        logger.debug("fatal", exc_info=True)
        print(f"llmad: error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
