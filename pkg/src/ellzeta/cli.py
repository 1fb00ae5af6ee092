"""Command-line interface: compute values, run identity suites, export tables.

Exit codes: 0 success, 1 a check failed, 2 usage error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import __version__, emzv, kzb
from .itint import QuadratureError
from .modform import LatticeParam, ModformError
from .records import ResultCache, ResultRecord, dumps, sort_records
from .settings import DEFAULT, Settings

log = logging.getLogger("ellzeta")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

SUITES = ("shuffle", "reversal", "modular", "ode", "kzb", "asymptotic", "all")

# plain-text statement of each identity, passed through into check records
ANCHORS = {
    "shuffle": "I(u) I(v) = sum of I(w) over the shuffles w of u and v",
    "reversal": "I(d_n..d_1) = (-1)^(d_1+..+d_n) I(d_1..d_n)",
    "modular": "J_d(tau) = sum_{a,b} (-1)^b/(a! b!) (log tau)^(a+b) tau^(-|mid|) I_mid(-1/tau)",
    "ode": "2 pi i dI/dtau = -(p~(x_1) . I), plus -(2 pi i/tau) xi on the J side",
    "kzb:A:A": "e^{i pi t} A e^{i pi t} A(-x,-y) = 1",
    "kzb:B:B": "e^{-i pi t} B e^{-i pi t} B(-x,-y) = 1",
    "kzb:comm:A:B": "A B A^-1 B^-1 = e^{-2 pi i t}",
    "kzb:ode:A": "2 pi i dA/dtau = -(sum (2n+1) G_{2n+2} delta_{2n})(A)",
    "kzb:ode:B": "2 pi i dB/dtau = -(sum (2n+1) G_{2n+2} delta_{2n})(B)",
    "kzb:ode:layers": "coefficients of the KZB equation defect = defects of the scalar system",
    "kzb:modular:A": "A(-1/tau) = Ad((-1/tau)^-t) alpha_tau(B(tau)^-1)",
    "kzb:modular:B": "B(-1/tau) = Ad((-1/tau)^-t) alpha_tau(B A B^-1 (tau))",
    "asymptotic": "I_d(iT) - I_{d,0} = O(e^{-2 pi T})",
}


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parsing


def parse_tau(text: str) -> complex:
    """'a+bi' (or with j) to a complex number in the upper half plane."""
    try:
        tau = complex(text.strip().replace(" ", "").replace("i", "j"))
    except ValueError:
        raise UsageError(f"cannot parse tau {text!r}; expected a+bi") from None
    if tau.imag <= 0:
        raise UsageError(f"tau must have positive imaginary part, got {text!r}")
    return tau


def parse_word(text: str) -> Tuple[int, ...]:
    try:
        return emzv.IndexWord.parse(text).d
    except (ValueError, emzv.EmzvError):
        raise UsageError(f"invalid word {text!r}; expected comma-separated integers >= -1") from None


def _join_word_args(argv: Sequence[str]) -> List[str]:
    """Allow '--word -1,-1': argparse would take '-1,-1' for an option."""
    out, it = [], iter(argv)
    for tok in it:
        if tok == "--word":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"--word={nxt}")
        else:
            out.append(tok)
    return out


def _settings(args) -> Settings:
    kw = {}
    for name in ("max_depth", "max_d", "max_weight", "quad_tol"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    return DEFAULT.with_(**kw)


def _selected_words(args) -> List[Tuple[int, ...]]:
    words = [parse_word(w) for w in (args.word or [])]
    if args.max_weight_range is not None:
        lo = args.min_weight or 1
        words += emzv.words_up_to_weight(args.max_weight_range, lo)
    seen, out = set(), []
    for w in words:
        if w not in seen:
            seen.add(w)
            out.append(w)
    return sorted(out, key=lambda d: (sum(v + 2 for v in d), len(d), d))


# ---------------------------------------------------------------------------
# compute


def _table(lat: LatticeParam, words, kind: str, settings: Settings):
    return emzv.compute_table(lat, words, kind, settings)


def _compute_chunk(args):
    tau, words, kind, settings = args
    return {d: (v.value, v.est_error, v.flagged) for d, v in _table(LatticeParam(tau), words, kind, settings).items()}


def compute_records(kind: str, words: Sequence[Tuple[int, ...]], tau: complex, settings: Settings = DEFAULT,
                    cache: Optional[ResultCache] = None, workers: int = 1) -> List[ResultRecord]:
    """Values for the words, reusing cached records when present."""
    sdict = settings.as_dict()
    meta = {"caps": {k: sdict[k] for k in ("max_depth", "max_d", "max_weight")},
            "quad_tol": settings.quad_tol, "version": __version__}
    found: Dict[Tuple[int, ...], ResultRecord] = {}
    keys = {d: ResultCache.key(kind, d, tau, sdict) for d in words}
    if cache is not None:
        for d in words:
            rec = cache.get(keys[d])
            if rec is not None:
                found[d] = rec
    missing = [d for d in words if d not in found]
    if missing:
        emzv._check_caps(missing, settings)
        if workers > 1 and len(missing) > 1:
            chunks = [missing[i::workers] for i in range(workers)]
            with ProcessPoolExecutor(workers) as pool:
                parts = list(pool.map(_compute_chunk, [(tau, c, kind, settings) for c in chunks if c]))
            fresh = {d: v for p in parts for d, v in p.items()}
        else:
            fresh = _compute_chunk((tau, missing, kind, settings))
        for d, (value, err, flagged) in fresh.items():
            rec = ResultRecord(kind, d, tau, value, err, dict(meta, flagged=bool(flagged)))
            found[d] = rec
            if cache is not None:
                cache.put(keys[d], rec)
    return [found[d] for d in words]


# ---------------------------------------------------------------------------
# checks


def _check_record(identity: str, word, tau: complex, residual: float, tol: float, **extra) -> ResultRecord:
    anchor = ANCHORS.get(identity, ANCHORS.get(identity.split(":")[0], ""))
    meta = {"identity": identity, "anchor": anchor, "tolerance": tol, "passed": bool(residual < tol)}
    meta.update(extra)
    return ResultRecord("check", tuple(word), tau, complex(residual, 0), 0.0, meta)


def run_suite(suite: str, tau: complex, settings: Settings = DEFAULT,
              max_weight: Optional[int] = None) -> List[ResultRecord]:
    lat = LatticeParam(tau)
    tol = settings.identity_tol
    out: List[ResultRecord] = []
    if suite == "shuffle":
        for (u, v), r in emzv.shuffle_suite(lat, max_weight or 6, "I", settings):
            out.append(_check_record("shuffle", u + v, tau, r, tol, left=list(u), right=list(v)))
    elif suite == "reversal":
        for d, r in emzv.reversal_suite(lat, max_weight or 6, "I", settings):
            out.append(_check_record("reversal", d, tau, r, tol))
    elif suite == "modular":
        r = emzv.check_modular(lat, 2, 3, settings)
        out.append(_check_record("modular", (), tau, r, settings.modular_tol, depth=2, d_max=3))
    elif suite == "ode":
        for kind in ("I", "J"):
            for d, r in emzv.ode_suite(lat, max_weight or 5, kind, None, settings):
                out.append(_check_record("ode", d, tau, r, settings.ode_tol, series=kind))
    elif suite == "kzb":
        a, b = kzb.assemble_A(lat, 5, settings), kzb.assemble_B(lat, 5, settings)
        for name, r in kzb.check_group_relations(a, b).items():
            out.append(_check_record(f"kzb:{name}", (), tau, r, 1e-6, truncation=5))
        rep = kzb.check_kzb_ode(lat, 5, None, settings)
        out.append(_check_record("kzb:ode:A", (), tau, rep.residual_A, settings.ode_tol, truncation=5))
        out.append(_check_record("kzb:ode:B", (), tau, rep.residual_B, settings.ode_tol, truncation=5))
        out.append(_check_record("kzb:ode:layers", (), tau, max(rep.layer_gap_I, rep.layer_gap_J), 1e-8))
        for name, r in kzb.check_modular_AB(lat, 4, settings).items():
            out.append(_check_record(f"kzb:modular:{name}", (), tau, r, 1e-6, truncation=4))
    elif suite == "asymptotic":
        for res in kzb.decay_suite(max_weight or 4, settings=settings):
            resid = abs(res.ratio - 1) if res.ratio is not None else res.diffs[1]
            tol_here = 0.2 if res.ratio is not None else 1e-12
            out.append(_check_record("asymptotic", res.word, 3j, resid, tol_here,
                                     diffs=list(res.diffs), ratio=res.ratio))
    elif suite == "all":
        for s in SUITES[:-1]:
            out += run_suite(s, tau, settings, max_weight if s in ("shuffle", "reversal", "ode") else None)
    else:
        raise UsageError(f"unknown suite {suite!r}")
    return out


def format_report(records: Sequence[ResultRecord]) -> str:
    lines = []
    for r in records:
        m = r.meta
        word = "(" + ",".join(map(str, r.word)) + ")" if r.word else "-"
        status = "PASS" if m["passed"] else "FAIL"
        lines.append(f"{status}  {m['identity']:<16} {word:<18} residual={r.value.real:.3e} "
                     f"tol={m['tolerance']:.0e}  [{m['anchor']}]")
    n_fail = sum(not r.meta["passed"] for r in records)
    lines.append(f"{len(records) - n_fail}/{len(records)} checks passed")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# entry point


def _emit(text: str, output: Optional[str]):
    if output:
        try:
            Path(output).write_text(text)
        except OSError as exc:
            raise UsageError(f"cannot write {output}: {exc}") from None
    else:
        sys.stdout.write(text)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--tau", default="0+1i", help="modulus a+bi with b > 0 (default 0+1i)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output", "-o", help="write to this file instead of stdout")
    p.add_argument("--max-depth", type=int, dest="max_depth")
    p.add_argument("--max-d", type=int, dest="max_d")
    p.add_argument("--quad-tol", type=float, dest="quad_tol")


def _add_selection(p: argparse.ArgumentParser):
    p.add_argument("--kind", choices=("I", "J"), default="I")
    p.add_argument("--word", action="append", help="comma-separated indices, repeatable")
    p.add_argument("--max-weight", type=int, dest="max_weight_range",
                   help="add every word up to this weight")
    p.add_argument("--min-weight", type=int, dest="min_weight")
    p.add_argument("--cache-dir", help="cache directory (default: $EMZV_CACHE_DIR or ~/.cache/ellzeta)")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ellzeta", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="compute I or J values")
    _add_common(p)
    _add_selection(p)

    p = sub.add_parser("check", help="run an identity suite")
    _add_common(p)
    p.add_argument("--suite", choices=SUITES, default="all")
    p.add_argument("--max-weight", type=int, dest="max_weight_suite")

    p = sub.add_parser("export", help="write computed or cached values to a file")
    _add_common(p)
    _add_selection(p)
    return parser


def _records_for(args, settings) -> List[ResultRecord]:
    tau = parse_tau(args.tau)
    words = _selected_words(args)
    if not words:
        return []
    cache = None if args.no_cache else ResultCache(args.cache_dir)
    return compute_records(args.kind, words, tau, settings, cache, max(1, args.workers))


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = _join_word_args(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        settings = _settings(args)
        if args.command in ("compute", "export"):
            if args.command == "export" and not args.output:
                raise UsageError("export needs --output")
            recs = sort_records(_records_for(args, settings))
            if recs or args.output:
                _emit(dumps(recs, args.format), args.output)
            return EXIT_OK
        tau = parse_tau(args.tau)
        recs = run_suite(args.suite, tau, settings, args.max_weight_suite)
        report = format_report(recs)
        if args.output:
            _emit(dumps(recs, args.format), args.output)
        sys.stdout.write(report)
        return EXIT_OK if all(r.meta["passed"] for r in recs) else EXIT_FAIL
    except (UsageError, emzv.EmzvError, kzb.TruncationError) as exc:
        sys.stderr.write(f"ellzeta: error: {exc}\n")
        return EXIT_USAGE
    except (QuadratureError, ModformError, kzb.KzbError, ArithmeticError) as exc:
        sys.stderr.write(f"ellzeta: numeric failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
