"""Command-line entry point: file ingestion, subcommand dispatch, JSON/CSV output.

Every invocation writes one JSON document to stdout.  By default it is an
envelope {"manifest": ..., "result": ...}; with --json-only only the result
is printed (byte-stable across runs at a fixed seed, suitable for golden
files).  Optional CSV sequences go to the --out path.  Exit codes: 0 on
success, 1 on domain errors (with a structured witness), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
import time

from . import __version__
from .chain import ChainError, decompose_classes, parse_chain, word_probability
from .cycles import (
    CycleError,
    approximating_words,
    decompose_balanced,
)
from .estimator import (
    EstimatorError,
    monte_carlo_ball,
    rl_slope,
)
from .measures import MeasureError, classify_admissible, parse_measure
from .rates import (
    MarkovMeasure,
    RateError,
    dv_entropy,
    entropy_rate_limit,
    marginal_entropy_rate,
    occupation_report,
    parse_potential,
    rate_report,
    scgf,
    scgf_conjugate,
    scgf_truncated,
)
from .words import (
    WordOpError,
    build_transition_table,
    coupling_constant,
    couple,
    gamma_mass,
    signed_gap_norm_of_words,
    slice_word,
    stitch,
    stitching_constant,
)

DOMAIN_ERRORS = (ChainError, MeasureError, WordOpError, RateError, CycleError, EstimatorError)


# --- deterministic JSON rendering -----------------------------------------


def _fmt_float(x):
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    if math.isnan(x):
        return '"nan"'
    if x == int(x) and abs(x) < 1e16:
        return format(x, ".1f")
    return format(x, ".17g")


def render_json(obj, indent=0):
    pad = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, str):
        out = obj.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{out}"'
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        inner = ",\n".join(
            f'{pad}  "{k}": {render_json(v, indent + 1)}' for k, v in obj.items()
        )
        return "{\n" + inner + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        inner = ",\n".join(f"{pad}  {render_json(v, indent + 1)}" for v in obj)
        return "[\n" + inner + "\n" + pad + "]"
    raise TypeError(f"cannot render {type(obj)!r}")


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


# --- shared readers ---------------------------------------------------------


def _read(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _load_chain(args):
    return parse_chain(_read(args.chain), renormalize=args.renormalize)


def _load_measure(path, chain):
    return parse_measure(_read(path), chain)


def _verdict_json(decomposition, chain, verdict):
    out = {"status": verdict.status.value}
    if verdict.j_mu is not None:
        out["classes"] = [
            sorted(chain.labels[x] for x in decomposition.classes[j]) for j in verdict.j_mu
        ]
    if verdict.witness is not None:
        kind, *rest = verdict.witness
        if kind == "tuple_outside_classes":
            out["witness"] = {"kind": kind, "tuple": list(chain.labels_of(rest[0]))}
        elif kind == "incomparable_classes":
            out["witness"] = {
                "kind": kind,
                "pair": [
                    sorted(chain.labels[x] for x in decomposition.classes[rest[0]]),
                    sorted(chain.labels[x] for x in decomposition.classes[rest[1]]),
                ],
            }
        else:
            out["witness"] = {
                "kind": kind,
                "class": sorted(chain.labels[x] for x in decomposition.classes[rest[0]]),
            }
    return out


def _ascent_json(res):
    if res is None:
        return None
    return {
        "value": res.value,
        "residual": res.residual,
        "converged": res.converged,
        "diverged": res.diverged,
    }


def _per_class_json(decomposition, chain, per_class):
    return [
        {
            "class": sorted(chain.labels[x] for x in decomposition.classes[pc.class_index]),
            "weight": pc.weight,
            "rate": pc.rate,
        }
        for pc in per_class
    ]


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for c in row:
            if isinstance(c, float):
                cells.append("-inf" if c == -math.inf else format(c, ".17g"))
            else:
                cells.append(str(c))
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# --- subcommands ------------------------------------------------------------


def _cmd_classify(args):
    chain = _load_chain(args)
    d = decompose_classes(chain)
    return {
        "classes": [sorted(chain.labels[x] for x in cls) for cls in d.classes],
        "transient": sorted(chain.labels[x] for x in d.transient),
        "order": sorted([a, b] for (a, b) in d.order),
        "beta_reaches": sorted(d.beta_reaches),
    }


def _cmd_check_measure(args):
    chain = _load_chain(args)
    d = decompose_classes(chain)
    mu = _load_measure(args.measure, chain)
    verdict = classify_admissible(d, mu)
    out = _verdict_json(d, chain, verdict)
    out["arity"] = mu.k
    out["total_mass"] = mu.total
    return out


def _cmd_rate(args):
    chain = _load_chain(args)
    d = decompose_classes(chain)
    mu = _load_measure(args.measure, chain)
    level = args.level if args.level is not None else mu.k
    if level != mu.k:
        raise MeasureError(f"measure has arity {mu.k}, not the requested level {level}")
    if level == 1:
        rep = occupation_report(chain, d, mu)
        return {
            "level": 1,
            "verdict": _verdict_json(d, chain, rep.verdict),
            "value": rep.value,
            "per_class": _per_class_json(d, chain, rep.per_class),
        }
    rep = rate_report(chain, d, mu, cross_check=args.cross_check)
    return {
        "level": level,
        "verdict": _verdict_json(d, chain, rep.verdict),
        "balanced": rep.balanced,
        "r_value": rep.r_value,
        "per_class": _per_class_json(d, chain, rep.per_class),
        "dv_lower_bound": _ascent_json(rep.j_value),
        "conjugate_lower_bound": _ascent_json(rep.lambda_star),
    }


def _cmd_scgf(args):
    chain = _load_chain(args)
    potential = parse_potential(_read(args.potential), chain)
    if args.truncate:
        window = chain.ids_of(args.truncate.split(","))
        value = scgf_truncated(chain, potential, window)
        return {"level": potential.k, "window": sorted(args.truncate.split(",")), "value": value}
    return {"level": potential.k, "value": scgf(chain, potential)}


def _cmd_conjugate(args):
    chain = _load_chain(args)
    mu = _load_measure(args.measure, chain)
    return {"level": mu.k} | _ascent_json(scgf_conjugate(chain, mu))


def _cmd_decompose(args):
    chain = _load_chain(args)
    mu = _load_measure(args.measure, chain)
    result = decompose_balanced(chain, mu, args.terms)
    return {
        "cycles": [list(chain.labels_of(c.word)) for c in result.cycles],
        "coefficients": list(result.coefficients),
        "tv_residual": result.tv_residual,
        "enumeration_truncated": result.truncated,
    }


def _cmd_approximate(args):
    chain = _load_chain(args)
    d = decompose_classes(chain)
    mu = _load_measure(args.measure, chain)
    res = approximating_words(chain, d, mu, args.m)
    return {
        "word": list(chain.labels_of(res.word)),
        "length": len(res.word),
        "tv_distance": res.tv_distance,
        "certified_bound": res.certified_bound,
        "target": 3.0 / args.m,
        "n_cycles": res.n_cycles,
    }


def _words_config(args, chain):
    d = decompose_classes(chain)
    window = frozenset(chain.ids_of(args.k.split(",")))
    j0 = tuple(int(tok) for tok in args.j0.split(","))
    return d, build_transition_table(chain, d, window, j0)


def _read_words(path, chain):
    words = []
    for line in _read(path).splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            words.append(chain.ids_of(line.split()))
    return words


def _cmd_words(args):
    chain = _load_chain(args)
    d, config = _words_config(args, chain)
    words = _read_words(args.words, chain) if args.words else []
    table = config.table
    constants = {
        "z0": chain.labels[table.z0],
        "eta": table.eta,
        "tau": table.tau,
    }
    if args.mode == "slice":
        out = []
        for u in words:
            sliced = slice_word(chain, config, u)
            checks = _slicing_bounds(chain, d, config, u, sliced)
            out.append(
                {
                    "word": list(chain.labels_of(u)),
                    "pieces": {
                        str(config.j0[pos]): list(chain.labels_of(w))
                        for pos, w in enumerate(sliced.pieces)
                    },
                    "bounds": checks,
                }
            )
        return {"mode": "slice", "constants": constants, "results": out}
    if args.mode == "stitch":
        items = []
        for w in words:
            pos = _infer_position(config, w)
            items.append((pos, w))
        total = sum(len(w) for _, w in items)
        t = args.t if args.t is not None else total - 1
        word = stitch(chain, config, items, t)
        lhs = signed_gap_norm_of_words(word, [w for _, w in items])
        rhs = total - (t + 1) + 2 * len(items) * table.tau
        return {
            "mode": "stitch",
            "constants": constants
            | {"c_st": stitching_constant(chain.beta[table.z0], table.eta, table.tau, len(items), total)},
            "word": list(chain.labels_of(word)),
            "tv_bound": {"lhs": lhs, "rhs": float(rhs), "holds": lhs <= rhs},
        }
    # couple
    if not words:
        raise WordOpError("couple needs a --words file")
    n = len(words[0]) - 1
    mass = sum(gamma_mass(config, w) for w in words)
    t = args.t if args.t is not None else mass - 1
    word = couple(chain, config, words, t)
    lhs = signed_gap_norm_of_words(word, words)
    r = len(config.j0)
    rhs = 2 * (len(words) * n - (t + 1)) + 2 * len(words) * (r * table.tau + 1)
    return {
        "mode": "couple",
        "constants": constants
        | {
            "C_nt": coupling_constant(
                chain.beta[table.z0], table.eta, table.tau, n, len(words), r
            )
        },
        "word": list(chain.labels_of(word)),
        "tv_bound": {"lhs": lhs, "rhs": float(rhs), "holds": lhs <= rhs},
    }


def _infer_position(config, w):
    for pos in range(len(config.j0)):
        if w[0] in config.k_sets[pos] and w[-1] in config.k_sets[pos]:
            return pos
    raise WordOpError("word endpoints lie in no window class; cannot stitch")


def _slicing_bounds(chain, d, config, u, sliced):
    per_class = []
    for pos, j in enumerate(config.j0):
        cls = d.classes[j]
        ks = config.k_sets[pos]
        inside = sum(1 for e in _pairs(u) if e[0] in cls and e[1] in cls)
        inside_k = sum(1 for e in _pairs(u) if e[0] in ks and e[1] in ks)
        piece_mass = max(len(sliced.pieces[pos]) - 1, 0)
        per_class.append(
            {
                "class": j,
                "lhs": float(inside - piece_mass),
                "rhs": float(inside - inside_k),
                "holds": inside - piece_mass <= inside - inside_k,
            }
        )
    gamma = gamma_mass(config, u)
    total_piece = sum(max(len(w) - 1, 0) for w in sliced.pieces)
    global_check = {
        "lhs": float((len(u) - 1) - total_piece),
        "rhs": float((len(u) - 1) - gamma),
        "holds": (len(u) - 1) - total_piece <= (len(u) - 1) - gamma,
    }
    return {"per_class": per_class, "global": global_check}


def _pairs(u):
    return [(u[i], u[i + 1]) for i in range(len(u) - 1)]


def _cmd_estimate(args):
    chain = _load_chain(args)
    d = decompose_classes(chain)
    mu = _load_measure(args.measure, chain)
    grid = tuple(int(tok) for tok in args.n.split(","))
    report = rl_slope(chain, d, mu, args.delta, grid)
    out = {
        "delta": report.delta,
        "grid": list(report.grid),
        "logprobs": list(report.logprobs),
        "slope": report.slope,
        "reference_rate": report.reference,
        "relative_gap": report.relative_gap,
    }
    if args.mc:
        opts = dict(tok.split("=", 1) for tok in args.mc.split(","))
        samples = int(opts.get("samples", "10000"))
        seed = int(opts.get("seed", str(args.seed)))
        mc = monte_carlo_ball(
            chain, mu, args.delta, grid[-1], samples, seed, workers=args.workers
        )
        out["monte_carlo"] = {
            "n": grid[-1],
            "estimate": mc.estimate,
            "wilson_low": mc.low,
            "wilson_high": mc.high,
            "hits": mc.hits,
            "samples": mc.samples,
            "seed": mc.seed,
            "streams": mc.streams,
        }
    if args.out:
        _write_csv(args.out, ("n", "logprob"), list(zip(report.grid, report.logprobs)))
    return out


def _parse_kernel_file(text, chain):
    q = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "trans" or len(parts) != 4:
            raise RateError(f"line {lineno}: expected `trans <from> <to> <prob>`")
        x, y = chain.id_of(parts[1]), chain.id_of(parts[2])
        q[(x, y)] = float(parts[3])
    return q


def _cmd_level3(args):
    chain = _load_chain(args)
    pi_measure = _load_measure(args.pi, chain)
    if pi_measure.k != 1:
        raise MeasureError("--pi must be an arity-1 measure")
    q = _parse_kernel_file(_read(args.q), chain)
    m = MarkovMeasure(pi={u[0]: w for u, w in pi_measure.entries.items()}, q=q)
    rows = []
    for k in range(1, args.kmax + 1):
        rows.append((k, marginal_entropy_rate(chain, m, k)))
    limit = entropy_rate_limit(chain, m)
    if args.out:
        _write_csv(args.out, ("k", "entropy_over_k"), rows)
    return {
        "sequence": [{"k": k, "value": v} for k, v in rows],
        "limit": limit,
    }


# --- dispatch ---------------------------------------------------------------


def _build_parser():
    p = argparse.ArgumentParser(
        prog="ldp",
        description="Large-deviation rate functions for finite Markov chains",
    )
    p.add_argument("--out", help="path for CSV output (estimate, level3)")
    p.add_argument("--workers", type=int, default=1, help="worker count; never changes results")
    p.add_argument("--seed", type=int, default=0, help="seed for sampled estimators")
    p.add_argument("--tolerance", type=float, default=None, help="override check tolerance")
    p.add_argument("--json-only", action="store_true", help="print the result without the manifest")
    p.add_argument("--renormalize", action="store_true", help="renormalize almost-stochastic input rows")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("classify", help="irreducible classes, order, transient set")
    s.add_argument("chain")
    s.set_defaults(fn=_cmd_classify)

    s = sub.add_parser("check-measure", help="admissibility verdict of a measure")
    s.add_argument("chain")
    s.add_argument("measure")
    s.set_defaults(fn=_cmd_check_measure)

    s = sub.add_parser("rate", help="rate-function report of a measure")
    s.add_argument("chain")
    s.add_argument("measure")
    s.add_argument("--level", type=int, default=None)
    s.add_argument("--cross-check", action="store_true")
    s.set_defaults(fn=_cmd_rate)

    s = sub.add_parser("scgf", help="tilted growth rate, optionally window-truncated")
    s.add_argument("chain")
    s.add_argument("--potential", required=True)
    s.add_argument("--truncate", default=None, help="comma-separated window labels")
    s.set_defaults(fn=_cmd_scgf)

    s = sub.add_parser("conjugate", help="numeric convex conjugate at a measure")
    s.add_argument("chain")
    s.add_argument("measure")
    s.set_defaults(fn=_cmd_conjugate)

    s = sub.add_parser("decompose", help="greedy cycle decomposition of a pair measure")
    s.add_argument("chain")
    s.add_argument("measure")
    s.add_argument("--terms", type=int, required=True)
    s.set_defaults(fn=_cmd_decompose)

    s = sub.add_parser("approximate", help="word whose empirical measure approximates the input")
    s.add_argument("chain")
    s.add_argument("measure")
    s.add_argument("--m", type=int, required=True, help="precision index; target is 3/m")
    s.set_defaults(fn=_cmd_approximate)

    s = sub.add_parser("words", help="slice, stitch, or couple trajectories")
    s.add_argument("mode", choices=("slice", "stitch", "couple"))
    s.add_argument("chain")
    s.add_argument("--k", required=True, help="comma-separated window labels")
    s.add_argument("--j0", required=True, help="comma-separated ordered class indices")
    s.add_argument("--words", default=None, help="file of words, one per line")
    s.add_argument("--t", type=int, default=None, help="target length parameter")
    s.set_defaults(fn=_cmd_words)

    s = sub.add_parser("estimate", help="ball probabilities and decay slope")
    s.add_argument("chain")
    s.add_argument("measure")
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--n", required=True, help="comma-separated horizon grid")
    s.add_argument("--mc", default=None, help="samples=...,seed=...")
    s.set_defaults(fn=_cmd_estimate)

    s = sub.add_parser("level3", help="marginal entropy sequence of a stationary Markov law")
    s.add_argument("chain")
    s.add_argument("--pi", required=True, help="arity-1 measure file")
    s.add_argument("--q", required=True, help="kernel file of `trans` lines")
    s.add_argument("--kmax", type=int, required=True)
    s.set_defaults(fn=_cmd_level3)
    return p


def _input_paths(args):
    out = {}
    for name in ("chain", "measure", "potential", "words", "pi", "q"):
        path = getattr(args, name, None)
        if path:
            out[path] = _digest(path)
    return out


def dispatch(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    started = time.monotonic()
    try:
        result = args.fn(args)
    except DOMAIN_ERRORS as exc:
        payload = {"error": {"kind": type(exc).__name__, "message": str(exc)}}
        print(render_json(payload))
        return 1
    except FileNotFoundError as exc:
        print(render_json({"error": {"kind": "FileNotFound", "message": str(exc)}}))
        return 1
    if args.json_only:
        print(render_json(result))
        return 0
    manifest = {
        "tool": "ldp",
        "version": __version__,
        "subcommand": args.command,
        "inputs": _input_paths(args),
        "config": {
            "seed": args.seed,
            "workers": args.workers,
            "tolerance": args.tolerance,
            "renormalize": args.renormalize,
        },
        "wall_time_s": time.monotonic() - started,
    }
    print(render_json({"manifest": manifest, "result": result}))
    return 0


def main(argv=None):
    return dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
