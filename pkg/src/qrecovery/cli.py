"""Command-line interface: synthesize, verify, klcheck and reproduce.

Artifacts are JSON; identical invocations produce byte-identical files.
Exit codes: 0 success, 1 usage or I/O error, 2 the run finished but a
certificate or benchmark row failed.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .channels import KrausChannel, bit_flip_channel, load_channel, transfer_from_kraus
from .codes import CodeSpace, load_code, repetition_code, s_matrix
from .sdp import eliminate_equalities, write_sdpa_sparse
from .synthesis import (
    SynthesisError,
    SynthesisOptions,
    assemble_alternative,
    assemble_standard,
    certify,
    default_s,
    load_result,
    result_to_json,
    synthesize,
    _as_kraus,
    _as_transfer,
)
from .verification import (
    SCENARIOS,
    reproduce_report,
    worst_fidelity,
    write_fidelity_sweep_csv,
)
from .codes import kl_check, perfect_recovery_gram

USAGE_ERROR, CHECK_FAILED = 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the artifact contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(USAGE_ERROR)


def _add_channel_args(p):
    p.add_argument("--channel", default="bitflip",
                   help="builtin name ('bitflip') or path to a channel JSON file")
    p.add_argument("--p", type=float, default=0.9, help="flip probability for the builtin channel")
    p.add_argument("--qubits", type=int, default=2,
                   help="qubit count for the builtin channel and the repetition code")


def _add_code_args(p):
    p.add_argument("--code", default="repetition",
                   help="builtin name ('repetition') or path to a code JSON file")


def _build_channel(args):
    if args.channel == "bitflip":
        if not 0.0 <= args.p <= 1.0:
            raise ValueError(f"--p must lie in [0, 1], got {args.p}")
        return bit_flip_channel(args.p, args.qubits)
    return load_channel(args.channel)


def _build_code(args):
    if args.code == "repetition":
        return repetition_code(args.qubits)
    return load_code(args.code)


def _write_json(payload, path):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _parse_grid(text):
    try:
        a, _, b = text.partition("x")
        return (int(a), int(b)) if b else (int(a), int(a))
    except ValueError as exc:
        raise ValueError(f"--grid expects N or NxM, got {text!r}") from exc


def _cmd_synthesize(args):
    channel = _build_channel(args)
    code = _build_code(args)
    s_override = None
    if args.s_diag:
        weights = np.array([float(v) for v in args.s_diag.split(",")])
        s_override = s_matrix(code, complement_weights=weights)
    opts = SynthesisOptions(
        gap_tol=args.gap_tol,
        max_iter=args.max_iter,
        verbose=args.solver_log,
        s_override=s_override,
    )
    if args.sdpa_export:
        s = s_override if s_override is not None else default_s(code, args.formulation)
        if args.formulation == "standard":
            problem = assemble_standard(_as_transfer(channel), code, s)
        else:
            problem = assemble_alternative(_as_kraus(channel), code, s)
        reduced, _ = eliminate_equalities(problem)
        write_sdpa_sparse(reduced, args.sdpa_export,
                          comment="recovery synthesis, equalities eliminated")
        print(f"wrote SDPA export to {args.sdpa_export}")

    try:
        result = synthesize(channel, code, formulation=args.formulation, options=opts)
    except SynthesisError as exc:
        print(f"solver did not reach optimality: {exc}", file=sys.stderr)
        if exc.result is not None and args.out:
            _write_json(result_to_json(exc.result), args.out)
        return CHECK_FAILED

    report = certify(result, channel, code)
    print(f"formulation          {result.formulation}")
    print(f"epsilon              {result.epsilon:.9f}")
    print(f"guaranteed fidelity  {result.guaranteed_fidelity:.9f}")
    print(f"tau                  {result.tau:.3e}")
    print(f"residuals            tp={result.residuals['tp']:.2e} "
          f"cp={result.residuals['cp']:.2e} lmi={result.residuals['lmi']:.2e}")
    print(f"solver               {result.solver_status} in {result.solver_iterations} iterations, "
          f"gap {result.solver_gap:.2e}")
    print(f"certificate          {'valid' if report.valid else 'INVALID'}")
    if args.out:
        _write_json(result_to_json(result), args.out)
        print(f"wrote result to {args.out}")
    return 0 if report.valid else CHECK_FAILED


def _cmd_klcheck(args):
    channel = _build_channel(args)
    code = _build_code(args)
    kraus = _as_kraus(channel)
    kl = kl_check(kraus, code)
    gram = perfect_recovery_gram(_as_transfer(channel), code)
    verdict = "perfectly correctable" if kl.satisfied else "not perfectly correctable"
    print(f"error set is {verdict} on this code")
    print(f"max violation        {kl.max_violation:.6e}")
    print(f"gram off-diagonal    {float(np.abs(gram.gram - np.diag(np.diag(gram.gram))).max()):.6e}")
    print(f"gram matrix:\n{np.array2string(gram.gram, precision=6)}")
    if args.out:
        _write_json(
            {
                "satisfied": kl.satisfied,
                "max_violation": kl.max_violation,
                "gram": [[float(v) for v in row] for row in gram.gram],
                "gram_passes": gram.passes,
            },
            args.out,
        )
    return 0


def _cmd_verify(args):
    result = load_result(args.result)
    channel = _build_channel(args)
    code = _build_code(args)
    report = certify(result, channel, code)
    composed = np.asarray(result.recovery.mat) @ np.asarray(_as_transfer(channel).mat)
    audit = worst_fidelity(composed, code, grid=_parse_grid(args.grid), seed=args.seed)
    bound = result.guaranteed_fidelity - 1e-6
    audit_ok = audit.min_fidelity >= bound
    print(f"certificate          {'valid' if report.valid else 'INVALID'}")
    print(f"lmi min eigenvalue   {report.lmi_min_eig:.3e}")
    print(f"compressed worst     {report.compression_min_eig:.9f} (bound {report.compression_bound:.9f})")
    print(f"audited worst        {audit.min_fidelity:.9f} (guaranteed {result.guaranteed_fidelity:.9f})")
    print(f"worst-case input     {np.array2string(audit.argmin_state, precision=6)}")
    if args.csv:
        write_fidelity_sweep_csv(composed, code, args.csv)
        print(f"wrote fidelity sweep to {args.csv}")
    if args.out:
        _write_json(
            {
                "certificate_valid": report.valid,
                "lmi_min_eig": report.lmi_min_eig,
                "compression_min_eig": report.compression_min_eig,
                "audited_worst_fidelity": audit.min_fidelity,
                "guaranteed_fidelity": result.guaranteed_fidelity,
                "audit_passed": bool(audit_ok),
            },
            args.out,
        )
    return 0 if (report.valid and audit_ok) else CHECK_FAILED


def _cmd_reproduce(args):
    scenarios = None
    if not args.all:
        if not args.scenario:
            raise ValueError("pass --all or --scenario NAME[,NAME...]")
        scenarios = [s.strip() for s in args.scenario.split(",") if s.strip()]
    report = reproduce_report(
        scenarios=scenarios, gap_tol=args.gap_tol, grid=_parse_grid(args.grid),
        verbose=args.solver_log,
    )
    print(report.as_text())
    if args.out:
        _write_json(report.as_json(), args.out)
        print(f"wrote report to {args.out}")
    return 0 if report.all_passed else CHECK_FAILED


def build_parser():
    parser = _Parser(prog="qrecovery",
                     description="Synthesize and audit quantum error-recovery channels.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_syn = sub.add_parser("synthesize", help="solve the recovery SDP for a channel and code")
    _add_channel_args(p_syn)
    _add_code_args(p_syn)
    p_syn.add_argument("--formulation", choices=("standard", "alternative"), default="standard")
    p_syn.add_argument("--gap-tol", type=float, default=1e-7)
    p_syn.add_argument("--max-iter", type=int, default=200)
    p_syn.add_argument("--out", help="write the result JSON here")
    p_syn.add_argument("--sdpa-export", help="also write the reduced problem in SDPA sparse format")
    p_syn.add_argument("--s-diag", help="comma-separated nonnegative complement weights for S")
    p_syn.add_argument("--solver-log", action="store_true", help="iteration log on stderr")
    p_syn.set_defaults(func=_cmd_synthesize)

    p_kl = sub.add_parser("klcheck", help="test perfect correctability of an error set")
    _add_channel_args(p_kl)
    _add_code_args(p_kl)
    p_kl.add_argument("--out", help="write the check JSON here")
    p_kl.set_defaults(func=_cmd_klcheck)

    p_ver = sub.add_parser("verify", help="audit a synthesized result against brute force")
    _add_channel_args(p_ver)
    _add_code_args(p_ver)
    p_ver.add_argument("--result", required=True, help="result JSON produced by synthesize")
    p_ver.add_argument("--grid", default="721x720", help="worst-case search grid, N or NxM")
    p_ver.add_argument("--seed", type=int, default=0, help="seed for the random search (codes with L > 2)")
    p_ver.add_argument("--csv", help="write a fidelity sweep CSV here")
    p_ver.add_argument("--out", help="write the audit JSON here")
    p_ver.set_defaults(func=_cmd_verify)

    p_rep = sub.add_parser("reproduce", help="run the benchmark scenario table")
    p_rep.add_argument("--all", action="store_true", help="run every scenario")
    p_rep.add_argument("--scenario", help=f"comma-separated subset of {', '.join(SCENARIOS)}")
    p_rep.add_argument("--gap-tol", type=float, default=1e-7)
    p_rep.add_argument("--grid", default="721x720")
    p_rep.add_argument("--out", help="write the report JSON here")
    p_rep.add_argument("--solver-log", action="store_true")
    p_rep.set_defaults(func=_cmd_reproduce)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
