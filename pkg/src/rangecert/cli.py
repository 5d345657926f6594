"""Command-line entry point: ``rangecert certify|analyze|fuzz-lemma2|selftest``.

Exit codes are 0 (certified, or selftest/fuzz clean), 1 (analysis finished
without certification, or a fuzz/selftest failure) and 2 (bad input or a
processing error).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import jsonschema
from jsonschema.exceptions import best_match
import numpy as np

from . import kernel, tolerances
from .certify import (
    SystemSpec,
    build_M,
    compute_inputs,
    decide,
    assemble_gram,
    lemma1_gap_check,
    lemma2_bound_check,
    zero_threshold,
)
from .errors import RangeCertError, SchemaError, TruncationUnavailable
from .models import (
    AngleModel,
    Pattern,
    coordinate_projection_system,
    graph_example,
    random_block_hermitian,
    trial_seed,
    two_subspace_system,
)
from .operators import EPDiag, section_layout, truncate
from .serialize import decode_op

EXIT_CERTIFIED, EXIT_NOT_CERTIFIED, EXIT_ERROR = 0, 1, 2
DEFAULT_GAP_EPS = 1e-3

_NUM = {"type": "number"}
_SCALAR = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}]}
_DECAY_PARAMS = {
    "type": "object",
    "required": ["coeffs", "ratio"],
    "properties": {"coeffs": {"type": "array", "items": _NUM, "minItems": 1}, "ratio": _NUM},
    "additionalProperties": False,
}

DOCUMENT_SCHEMA = {
    "type": "object",
    "required": ["version", "system"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": 1},
        "system": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["operators"],
                    "additionalProperties": False,
                    "properties": {
                        "operators": {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "type": "object",
                                "required": ["op"],
                                "additionalProperties": False,
                                "properties": {
                                    "label": {"type": "string"},
                                    "op": {"type": "object", "required": ["type"]},
                                    "allocation": {"type": "array", "items": _NUM},
                                },
                            },
                        }
                    },
                },
                {
                    "type": "object",
                    "required": ["model"],
                    "additionalProperties": False,
                    "properties": {
                        "model": {
                            "type": "object",
                            "required": ["name"],
                            "additionalProperties": False,
                            "properties": {
                                "name": {"enum": ["two_subspace", "graph", "coordinate_projections"]},
                                "params": {"type": "object"},
                            },
                        }
                    },
                },
            ]
        },
        "overrides": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gamma": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
                "eps": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["pair", "value"],
                        "additionalProperties": False,
                        "properties": {
                            "pair": {"type": "array", "items": {"type": "string"},
                                     "minItems": 2, "maxItems": 2},
                            "value": {"type": "number", "minimum": 0},
                        },
                    },
                },
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "truncate": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "gap_eps": {"type": "number", "exclusiveMinimum": 0},
                "tolerance_scale": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

MODEL_SCHEMAS = {
    "two_subspace": {
        "type": "object",
        "required": ["tail_cos"],
        "additionalProperties": False,
        "properties": {
            "head_cos": {"type": "array", "items": _NUM},
            "tail_cos": {"type": "array", "items": _NUM, "minItems": 1},
            "decay": _DECAY_PARAMS,
        },
    },
    "graph": {
        "type": "object",
        "required": ["tail"],
        "additionalProperties": False,
        "properties": {
            "head": {"type": "array", "items": _SCALAR},
            "tail": {"type": "array", "items": _SCALAR, "minItems": 1},
            "decay": _DECAY_PARAMS,
        },
    },
    "coordinate_projections": {
        "type": "object",
        "required": ["patterns"],
        "additionalProperties": False,
        "properties": {
            "patterns": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["tail"],
                    "additionalProperties": False,
                    "properties": {
                        "head": {"type": "array", "items": {"enum": [0, 1]}},
                        "tail": {"type": "array", "items": {"enum": [0, 1]}, "minItems": 1},
                    },
                },
            }
        },
    },
}


# ---------------------------------------------------------------- documents


def _line_of(text: str, path) -> Optional[int]:
    """Line of the innermost object key on ``path`` (best effort)."""
    pos, found = 0, None
    for key in path:
        if isinstance(key, str):
            hit = text.find(json.dumps(key), pos)
            if hit < 0:
                break
            pos = found = hit
    if found is None:
        return 1
    return text.count("\n", 0, found) + 1


def _schema_error(text, err, prefix=()):
    path = tuple(prefix) + tuple(err.absolute_path)
    line = _line_of(text, path)
    where = "/".join(str(p) for p in path) or "<root>"
    return SchemaError(f"line {line}: {where}: {err.message}", line, path)


@dataclass
class SystemDocument:
    version: int
    system: SystemSpec
    overrides: dict
    truncate: tuple
    gap_eps: float
    tolerance_scale: float
    model: Optional[str] = None
    oracle: dict = field(default_factory=dict)


def _decay_tuple(obj):
    return None if obj is None else (tuple(obj["coeffs"]), obj["ratio"])


def _build_model(name, params):
    if name == "two_subspace":
        return two_subspace_system(AngleModel(tuple(params.get("head_cos", ())),
                                              tuple(params["tail_cos"]),
                                              _decay_tuple(params.get("decay"))))
    if name == "graph":
        from .serialize import decode_scalar

        head = [decode_scalar(x) for x in params.get("head", [])]
        tail = [decode_scalar(x) for x in params["tail"]]
        return graph_example(EPDiag(head, tail, _decay_tuple(params.get("decay"))))
    pats = [Pattern(tuple(p.get("head", ())), tuple(p["tail"])) for p in params["patterns"]]
    return coordinate_projection_system(pats)


def _json_oracle(oracle: dict) -> dict:
    out = {}
    for k, v in oracle.items():
        if callable(v):
            continue
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, tuple):
            v = [x.to_json() if hasattr(x, "to_json") else x for x in v]
        out[k] = v
    return out


def parse_document(text: str) -> SystemDocument:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"line {e.lineno}: invalid JSON: {e.msg}", e.lineno) from None
    err = best_match(jsonschema.Draft202012Validator(DOCUMENT_SCHEMA).iter_errors(raw))
    if err is not None:
        raise _schema_error(text, err)
    sys_obj = raw["system"]
    model_name, oracle = None, {}
    try:
        if "model" in sys_obj:
            model_name = sys_obj["model"]["name"]
            params = sys_obj["model"].get("params", {})
            err = best_match(
                jsonschema.Draft202012Validator(MODEL_SCHEMAS[model_name]).iter_errors(params))
            if err is not None:
                raise _schema_error(text, err, ("system", "model", "params"))
            built = _build_model(model_name, params)
            system, oracle = built.system, _json_oracle(built.oracle)
        else:
            items = sys_obj["operators"]
            ops = [decode_op(it["op"]) for it in items]
            labels = [it.get("label", f"A{k + 1}") for k, it in enumerate(items)]
            alloc = [tuple(it["allocation"]) if "allocation" in it else None for it in items]
            system = SystemSpec(tuple(ops), tuple(labels), tuple(alloc))
    except SchemaError:
        raise
    except (ValueError, KeyError, TypeError, RangeCertError) as e:
        raise SchemaError(f"line {_line_of(text, ('system',))}: system: {e}",
                          _line_of(text, ("system",)), ("system",)) from None
    over = raw.get("overrides", {})
    overrides = {
        "gamma": dict(over.get("gamma", {})),
        "eps": {tuple(e["pair"]): e["value"] for e in over.get("eps", [])},
    }
    for label in list(overrides["gamma"]) + [l for p in overrides["eps"] for l in p]:
        if label not in system.labels:
            raise SchemaError(f"line {_line_of(text, ('overrides',))}: overrides: "
                              f"unknown operator label {label!r}",
                              _line_of(text, ("overrides",)), ("overrides",))
    analysis = raw.get("analysis", {})
    sizes = tuple(analysis.get("truncate", ()))
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        line = _line_of(text, ("analysis", "truncate"))
        raise SchemaError(f"line {line}: analysis/truncate: sizes must be strictly increasing",
                          line, ("analysis", "truncate"))
    return SystemDocument(1, system, overrides, sizes,
                          float(analysis.get("gap_eps", DEFAULT_GAP_EPS)),
                          float(analysis.get("tolerance_scale", 1.0)), model_name, oracle)


# ---------------------------------------------------------------- report


def _num(x):
    x = float(x)
    if math.isinf(x) and x > 0:
        return "inf"
    if not math.isfinite(x):
        raise ValueError(f"cannot report {x!r}")
    return x


@dataclass
class Report:
    command: str
    labels: list = field(default_factory=list)
    model: Optional[str] = None
    model_oracle: dict = field(default_factory=dict)
    moduli: list = field(default_factory=list)
    inputs: Optional[dict] = None
    M: Optional[list] = None
    lambda_min_M: Optional[float] = None
    verdict: Optional[dict] = None
    diagnostics: Optional[dict] = None
    error: Optional[dict] = None
    timings: dict = field(default_factory=dict)
    version: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "Report":
        return cls(**obj)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)


def _run_certificate(doc: SystemDocument, report: Report):
    t0 = time.perf_counter()
    inputs = compute_inputs(doc.system, doc.overrides)
    report.moduli = [dict(label=l, **m.to_json()) for l, m in zip(doc.system.labels, inputs.moduli)]
    report.inputs = {
        "gamma": [g.to_json() for g in inputs.gamma_lb],
        "gamma_provenance": list(inputs.gamma_provenance),
        "eps": inputs.eps_ub.tolist(),
        "eps_provenance": [list(r) for r in inputs.eps_provenance],
        "cap": inputs.cap,
    }
    cm = build_M(inputs)
    verdict = decide(cm, inputs.cap)
    report.M = cm.M.tolist()
    report.lambda_min_M = cm.lambda_min
    report.verdict = verdict.to_json()
    report.verdict["dominance_margin"] = cm.dominance_margin
    report.timings["certificate_s"] = time.perf_counter() - t0
    return verdict


def _error_dict(e: Exception) -> dict:
    return {"kind": type(e).__name__, "message": str(e), "label": getattr(e, "label", None)}


def _usable_subsystem(system: SystemSpec, n: int):
    """Operators whose truncation to ``n`` works and keeps the same codomain
    coordinates as the first such operator; the rest are reported."""
    keep, skipped, layout = [], [], None
    for k, (a, label, alloc) in enumerate(zip(system.operators, system.labels, system.allocation)):
        try:
            truncate(a, n, alloc)
            this = section_layout(a.codomain, n, alloc)
        except (RangeCertError, ValueError) as e:
            skipped.append({"label": label, "message": str(e)})
            continue
        if layout is None:
            layout = this
        if this != layout:
            err = TruncationUnavailable(f"{label}: codomain section keeps {this}, "
                                        f"expected {layout}", label)
            skipped.append({"label": label, "message": str(err)})
            continue
        keep.append(k)
    if not keep:
        return None, skipped
    sub = SystemSpec(tuple(system.operators[k] for k in keep),
                     tuple(system.labels[k] for k in keep),
                     tuple(system.allocation[k] for k in keep))
    return sub, skipped


def _analyze_one(system: SystemSpec, n: int, gap_eps: float):
    sub, skipped = _usable_subsystem(system, n)
    if sub is None:
        return {"N": n, "unavailable": skipped}, None
    g = assemble_gram(sub, n).G
    w = kernel.eigvalsh(g)
    t = zero_threshold(g)
    nonzero = w[w > t]
    gap = lemma1_gap_check(sub, n, gap_eps)
    entry = {
        "N": n,
        "gram_dim": int(g.shape[0]),
        "kernel_count": int(np.count_nonzero(w <= t)),
        "zero_threshold": t,
        "smallest_nonzero": _num(nonzero[0]) if nonzero.size else "inf",
        "largest": _num(w[-1]) if w.size else 0.0,
        "gap_check": {"passed": gap.passed, "smallest_nonzero": _num(gap.smallest_nonzero),
                      "threshold": gap.threshold, "eps": gap_eps},
        "labels": list(sub.labels),
        "unavailable": skipped,
    }
    return entry, w


def spectra_csv(spectra) -> str:
    """CSV text with columns ``N, eig_index, eigenvalue``; ``repr`` floats,
    LF line endings."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["N", "eig_index", "eigenvalue"])
    for n, w in spectra:
        for i, x in enumerate(w):
            writer.writerow([n, i, repr(float(x))])
    return buf.getvalue()


def run_analysis(doc: SystemDocument, sizes, gap_eps, jobs: int = 1):
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(lambda n: _analyze_one(doc.system, n, gap_eps), sizes))
    per_n = [r[0] for r in results]
    spectra = [(n, r[1]) for n, r in zip(sizes, results) if r[1] is not None]
    counts = [e.get("kernel_count") for e in per_n]
    diag = {
        "per_n": per_n,
        "kernel_counts": counts,
        "kernel_counts_strictly_increasing": all(
            a is not None and b is not None and b > a for a, b in zip(counts, counts[1:])
        ) and len(counts) > 1,
        "kernel_counts_stabilized": len(counts) >= 3 and len(set(counts[-3:])) == 1
        and counts[-1] is not None,
    }
    return diag, spectra, time.perf_counter() - t0


# ---------------------------------------------------------------- commands


def _load(path) -> SystemDocument:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise SchemaError(f"cannot read {path}: {e.strerror}") from None
    return parse_document(text)


def _emit(report: Report, out: Optional[str]):
    text = report.to_json() + "\n"
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _fail(command, e, out):
    report = Report(command=command, error=_error_dict(e))
    print(f"error: {e}", file=sys.stderr)
    with contextlib.suppress(OSError):
        _emit(report, out)
    return EXIT_ERROR


def cmd_certify(path, out=None) -> int:
    try:
        doc = _load(path)
    except RangeCertError as e:
        return _fail("certify", e, out)
    report = Report("certify", list(doc.system.labels), doc.model, doc.oracle)
    try:
        with tolerances.scaled(doc.tolerance_scale):
            verdict = _run_certificate(doc, report)
    except (RangeCertError, ValueError) as e:
        report.error = _error_dict(e)
        print(f"error: {e}", file=sys.stderr)
        _emit(report, out)
        return EXIT_ERROR
    _emit(report, out)
    return EXIT_CERTIFIED if verdict.certified else EXIT_NOT_CERTIFIED


def cmd_analyze(path, sizes=None, gap_eps=None, out=None, csv_path=None, jobs=1) -> int:
    try:
        doc = _load(path)
        sizes = tuple(sizes) if sizes else doc.truncate
        if not sizes:
            raise SchemaError("no truncation sizes: pass --truncate or analysis.truncate")
        if any(n < 1 for n in sizes) or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise SchemaError("truncation sizes must be positive and strictly increasing")
    except RangeCertError as e:
        return _fail("analyze", e, out)
    gap_eps = doc.gap_eps if gap_eps is None else float(gap_eps)
    report = Report("analyze", list(doc.system.labels), doc.model, doc.oracle)
    code = EXIT_ERROR
    with tolerances.scaled(doc.tolerance_scale):
        try:
            verdict = _run_certificate(doc, report)
            code = EXIT_CERTIFIED if verdict.certified else EXIT_NOT_CERTIFIED
        except (RangeCertError, ValueError) as e:
            report.error = _error_dict(e)
            print(f"error: {e}", file=sys.stderr)
        try:
            diag, spectra, dt = run_analysis(doc, sizes, gap_eps, jobs)
        except (RangeCertError, ValueError) as e:
            report.error = report.error or _error_dict(e)
            _emit(report, out)
            return EXIT_ERROR
    report.diagnostics = diag
    report.timings["analysis_s"] = dt
    target = csv_path or (f"{out}.spectra.csv" if out else None)
    if target:
        with open(target, "w", encoding="utf-8", newline="") as f:
            f.write(spectra_csv(spectra))
    _emit(report, out)
    return code


def equality_case():
    return np.array([[2.0, 1.0], [1.0, 2.0]]), (1, 1)


def fuzz_lemma2(trials: int, seed: int, max_blocks: int = 4, max_size: int = 30,
                inject_equality: bool = False):
    """Returns ``(summary_lines, violation)``.  Trial ``t`` uses seed
    ``s = trial_seed(seed, t)``, ``2 + s mod (max_blocks - 1)`` blocks, and
    the matrix ``random_block_hermitian(s, blocks, max_size)``."""
    if trials < 1 or max_blocks < 2 or max_size < 1:
        raise ValueError("need trials >= 1, max_blocks >= 2, max_size >= 1")
    min_slack, worst, violation = math.inf, None, None
    for t in range(trials):
        s = trial_seed(seed, t)
        h, part = random_block_hermitian(s, 2 + s % (max_blocks - 1), max_size)
        res = lemma2_bound_check(h, part)
        if res.slack < min_slack:
            min_slack, worst = res.slack, t
        if not res.passed:
            violation = (t, s, res.slack)
            break
    lines = [
        f"fuzz-lemma2 seed={seed} trials={trials} max_blocks={max_blocks} max_size={max_size}",
        f"checked={t + 1}",
        f"violations={0 if violation is None else 1}",
        f"min_slack={min_slack!r}",
        f"min_slack_trial={worst}",
    ]
    if inject_equality:
        h, part = equality_case()
        res = lemma2_bound_check(h, part)
        lines.append(f"equality_case_slack={res.slack!r}")
        if not res.passed:
            violation = violation or ("equality", None, res.slack)
    if violation is not None:
        t, s, slack = violation
        lines.append(f"VIOLATION trial={t} seed={s} slack={slack!r}")
    return lines, violation


def cmd_fuzz_lemma2(trials, seed, max_blocks=4, max_size=30, inject_equality=False) -> int:
    try:
        lines, violation = fuzz_lemma2(trials, seed, max_blocks, max_size, inject_equality)
    except (RangeCertError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_NOT_CERTIFIED if violation else EXIT_CERTIFIED


def cmd_selftest() -> int:
    from .selftest import run_all

    results = run_all()
    for r in results:
        print(f"{r.id} {'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    failed = [r.id for r in results if not r.passed]
    print(f"selftest: {len(results) - len(failed)}/{len(results)} passed"
          + (f"; failing: {', '.join(failed)}" if failed else ""))
    return EXIT_NOT_CERTIFIED if failed else EXIT_CERTIFIED


# ---------------------------------------------------------------- argparse


def _sizes(text):
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_ERROR)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rangecert", description="Spectral certificates for closed sums of ranges.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("certify", help="decide a system document")
    c.add_argument("file")
    c.add_argument("--out")

    a = sub.add_parser("analyze", help="certificate plus truncated Gram diagnostics")
    a.add_argument("file")
    a.add_argument("--truncate", type=_sizes)
    a.add_argument("--gap-eps", type=float)
    a.add_argument("--out")
    a.add_argument("--csv", help="spectra CSV path (default <out>.spectra.csv)")
    a.add_argument("--jobs", type=int, default=1)

    f = sub.add_parser("fuzz-lemma2", help="randomized check of the block eigenvalue bound")
    f.add_argument("--trials", type=int, default=1000)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--max-blocks", type=int, default=4)
    f.add_argument("--max-size", type=int, default=30)
    f.add_argument("--inject-equality", action="store_true")

    sub.add_parser("selftest", help="run the bundled acceptance checks")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "certify":
            return cmd_certify(args.file, args.out)
        if args.command == "analyze":
            return cmd_analyze(args.file, args.truncate, args.gap_eps, args.out, args.csv, args.jobs)
        if args.command == "fuzz-lemma2":
            return cmd_fuzz_lemma2(args.trials, args.seed, args.max_blocks, args.max_size,
                                   args.inject_equality)
        return cmd_selftest()
    except Exception as e:  # keep the exit-code contract for unexpected failures
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
