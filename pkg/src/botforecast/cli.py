"""Command-line entry point: ingest, train, predict, eval, sweep, simulate, inspect."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import evaluation, events, ids_ingest, model_io, semi_markov, synth
from .errors import BotforecastError
from .events import DEFAULT_ALPHABET, StateAlphabet, collapse
from .predictor import Predictor, write_records

log = logging.getLogger("botforecast")


class CliError(Exception):
    pass


def _alphabet(args) -> StateAlphabet:
    return StateAlphabet.load(args.alphabet) if args.alphabet else DEFAULT_ALPHABET


def _intervals(text: str | None) -> semi_markov.IntervalSet:
    if not text:
        return semi_markov.DEFAULT_INTERVALS
    try:
        return semi_markov.IntervalSet(tuple(float(x) for x in text.split(",")))
    except ValueError as exc:
        raise CliError(f"bad --intervals {text!r}: {exc}") from None


def _orders(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _require(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise CliError(f"no such file: {p}")


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    with model_io.atomic_write(out) as fh:
        fh.write(text)


def _is_jsonl(path: str) -> bool:
    with open(path) as fh:
        for line in fh:
            if line.strip():
                return line.lstrip().startswith("{")
    return False


def _load_model_checked(path: str, args):
    chain, smc = model_io.load_model(path)
    if args.alphabet and _alphabet(args) != chain.alphabet:
        raise CliError("--alphabet does not match the model's alphabet")
    return chain, smc


# -- subcommands -----------------------------------------------------------------


def cmd_ingest(args) -> int:
    _require(args.input, args.mapping)
    alphabet = _alphabet(args)
    if _is_jsonl(args.input):
        traces = events.read_traces(args.input, alphabet)
    else:
        if args.mapping is None:
            raise CliError("--mapping is required for alert logs")
        config = ids_ingest.StateMappingConfig.load(args.mapping)
        config.validate(alphabet)
        stats = ids_ingest.ParseStats()
        alerts = ids_ingest.read_alert_file(args.input, stats)
        result = ids_ingest.alerts_to_traces(alerts, config, alphabet)
        print(
            f"lines={stats.lines} parsed={stats.parsed} parse_errors={len(stats.errors)} "
            f"matched={result.matched} discarded={result.discarded} hosts={len(result.traces)}",
            file=sys.stderr,
        )
        traces = result.traces
    if not traces:
        print("no alerts matched", file=sys.stderr)
        return 2
    _emit(events.format_traces(traces, alphabet), args.out)
    return 0


def cmd_train(args) -> int:
    _require(args.traces)
    if args.out is None:
        raise CliError("--out is required for train")
    alphabet = _alphabet(args)
    traces = [collapse(t) for t in events.read_traces(args.traces, alphabet)]
    chain = evaluation.train_chain(traces, alphabet, args.order, args.backoff)
    smc = None if args.no_smc else semi_markov.estimate_smc(traces, alphabet, _intervals(args.intervals))
    model_io.save_model(args.out, chain, smc)
    return 0


def cmd_predict(args) -> int:
    _require(args.model, args.traces)
    chain, smc = _load_model_checked(args.model, args)
    predictor = Predictor(chain, smc, args.interval_mode)
    records = []
    for tr in events.read_traces(args.traces, chain.alphabet):
        records.extend(predictor.replay(tr))
    buf = io.StringIO()
    write_records(records, buf, chain.alphabet)
    _emit(buf.getvalue(), args.out)
    return 0


def _write_cdf(path: Path, series) -> None:
    with model_io.atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "cumulative_fraction"])
        for v, f in series:
            w.writerow([repr(float(v)), repr(f)])


def cmd_eval(args) -> int:
    _require(args.traces)
    if args.out is None:
        raise CliError("--out DIR is required for eval")
    alphabet = _alphabet(args)
    traces = events.read_traces(args.traces, alphabet)
    report = evaluation.evaluate(
        traces,
        alphabet,
        order=args.order,
        split=evaluation.SplitSpec(args.split_minutes),
        intervals=None if args.no_smc else _intervals(args.intervals),
        backoff=args.backoff,
        interval_mode=args.interval_mode,
        no_prediction_as_fn=args.no_prediction_as_fn,
    )
    if not report.hosts_tested:
        print(f"warning: all hosts were excluded (no events after {args.split_minutes} minutes)", file=sys.stderr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with model_io.atomic_write(out / "metrics.json") as fh:
        json.dump({"schema_version": model_io.SCHEMA_VERSION, **report.to_dict()}, fh, indent=1)
        fh.write("\n")
    _write_cdf(out / "lead_attack_cdf.csv", evaluation.cdf_series(report.lead_times["attack"]))
    _write_cdf(out / "lead_precursor_cdf.csv", evaluation.cdf_series(report.lead_times["precursor"]))
    ie = report.interval_errors
    if ie is not None:
        _write_cdf(out / "interval_error_cdf_all.csv", ie.cdf())
        _write_cdf(out / "interval_error_cdf_preceding_attack.csv", ie.cdf(attack_only=True))
        for s in range(len(alphabet)):
            _write_cdf(out / f"interval_error_cdf_{alphabet.name(s)}.csv", ie.cdf(s))
    return 0


def cmd_sweep(args) -> int:
    _require(args.traces)
    alphabet = _alphabet(args)
    traces = events.read_traces(args.traces, alphabet)
    target = alphabet.index(args.target) if args.target else None
    rows = evaluation.order_sweep(
        traces, alphabet, _orders(args.orders), target, evaluation.SplitSpec(args.split_minutes), args.threads
    )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["order", "tpr", "fpr", "accuracy"])
    for r in rows:
        w.writerow([r["order"], *("" if r[k] is None else repr(r[k]) for k in ("tpr", "fpr", "accuracy"))])
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_simulate(args) -> int:
    _require(args.spec)
    spec = synth.GeneratorSpec.load(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    if args.alphabet and _alphabet(args) != spec.alphabet:
        raise CliError("--alphabet does not match the generator spec's alphabet")
    traces = synth.generate(spec)
    _emit(events.format_traces(traces, spec.alphabet), args.out)
    return 0


def _fmt_row(values) -> str:
    return "  ".join(f"{v:8.4f}" for v in values)


def cmd_inspect(args) -> int:
    _require(args.model)
    chain, smc = _load_model_checked(args.model, args)
    data = model_io.model_to_dict(chain, smc)
    a = chain.alphabet
    lines = [f"order: {chain.order}", f"states: {', '.join(a.states)}", f"attack state: {a.attack_state}"]
    if data["kind"] == "markov":
        d = data["diagnostics"]
        lines.append(f"include_self: {chain.include_self}")
        lines.append("transition probabilities:")
        lines += [f"  {a.name(i):>18}  {_fmt_row(row)}" for i, row in enumerate(chain.probs)]
        lines.append(f"irreducible: {d['irreducible']}")
        lines.append(f"aperiodic: {d['aperiodic']} (periods {d['periods']})")
        if d["empty_rows"]:
            lines.append(f"no outgoing data: {', '.join(d['empty_rows'])}")
        if d["stationary"] is not None:
            lines.append("stationary distribution:")
            lines += [f"  {a.name(i):>18}  {p:.6f}" for i, p in enumerate(d["stationary"])]
            lines.append("detailed-balance residuals |P_i t_ij - P_j t_ji|:")
            lines += [
                f"  {r['i']:>18} {r['j']:>18}  {r['residual']:.6f}  {'ok' if r['pass'] else 'FAIL'}"
                for r in d["reversibility"]
            ]
    else:
        lines.append(f"contexts: {len(chain.rows)}  transitions: {chain.total_transitions}")
    if smc is not None:
        lines.append(f"holding-time intervals (right edges): {list(smc.intervals.boundaries)} + unbounded")
        lines.append("per-state interval mass:")
        for i in range(len(a)):
            mass = smc.mass[:, i]
            mode = semi_markov.predict_holding_interval(smc, i)
            lines.append(f"  {a.name(i):>18}  {_fmt_row(mass)}  mode={mode}")
    print("\n".join(lines))
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alphabet", help="alphabet JSON file (default: 4-state lifecycle)")
    common.add_argument("--seed", type=int, default=None, help="random seed (simulate; default: spec seed, 0)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--out", help="output path ('-' or omitted: stdout where allowed)")
    common.add_argument("-v", "--verbose", action="store_true")

    def model_flags(p):
        p.add_argument("--order", type=int, default=1)
        p.add_argument("--intervals", help="comma-separated interval right edges in minutes")
        p.add_argument("--no-smc", action="store_true", help="skip the semi-Markov model")
        p.add_argument("--backoff", action="store_true", help="back off to shorter contexts when unseen")

    parser = argparse.ArgumentParser(prog="botforecast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="Snort fast-alert log (or trace JSONL) -> trace JSONL")
    p.add_argument("input")
    p.add_argument("--mapping", help="state mapping JSON")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", parents=[common], help="train a model file from trace JSONL")
    p.add_argument("traces")
    model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="replay traces through a model -> prediction CSV")
    p.add_argument("model")
    p.add_argument("traces")
    p.add_argument("--interval-mode", choices=["marginal", "conditional"], default="marginal")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="temporal split evaluation -> metrics JSON + CDF CSVs")
    p.add_argument("traces")
    model_flags(p)
    p.add_argument("--split-minutes", type=float, default=85.0)
    p.add_argument("--interval-mode", choices=["marginal", "conditional"], default="marginal")
    p.add_argument("--no-prediction-as-fn", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="evaluate a range of chain orders -> CSV")
    p.add_argument("traces")
    p.add_argument("--orders", default="1-9", help="e.g. 1-9 or 1,2,4")
    p.add_argument("--split-minutes", type=float, default=85.0)
    p.add_argument("--target", help="target state name (default: attack state)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", parents=[common], help="generate synthetic traces from a spec JSON")
    p.add_argument("spec")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("inspect", parents=[common], help="print model diagnostics")
    p.add_argument("model")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (CliError, BotforecastError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
