"""Independent audits of synthesized recoveries.

Nothing in this module touches the SDP machinery: worst-case fidelities are
found by exhaustive grid search (two-dimensional codes) or seeded random
sampling (larger ones), refined with a derivative-free polish, and the
baselines (no coding, no recovery, three-qubit majority vote) come either
from closed forms or from direct channel simulation.  The relaxed bound
computed from the compression onto the doubled code space always lower-bounds
the audited worst case, which is what makes the audit meaningful.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .channels import (
    KrausChannel,
    TransferMatrix,
    _mat_of,
    bit_flip_channel,
    transfer_from_kraus,
)
from .codes import CodeSpace, code_pair_basis, full_space_code, perfect_recovery_gram, repetition_code

__all__ = [
    "FidelityReport",
    "fidelity",
    "worst_fidelity",
    "relaxed_worst",
    "majority_rule_channel",
    "majority_min_fidelity",
    "majority_fidelity",
    "bit_flip_pair_fidelity",
    "ReportRow",
    "Report",
    "reproduce_report",
    "SCENARIOS",
    "write_fidelity_sweep_csv",
]


@dataclass
class FidelityReport:
    min_fidelity: float
    argmin_state: np.ndarray
    grid: str
    refined: bool


def _compressed_form(x, c: CodeSpace):
    """Q = B^dagger X B on the doubled code space; fidelities are u^+ Q u."""
    pair = code_pair_basis(c)
    return pair.conj().T @ _mat_of(x) @ pair


def _pair_coeffs(lams):
    """u[g, i*L+j] = lam[g, i] * conj(lam[g, j]) for a batch of code coefficients."""
    lams = np.atleast_2d(lams)
    outer = lams[:, :, None] * lams.conj()[:, None, :]
    return outer.reshape(lams.shape[0], -1)


def _eval_form(q, lams):
    u = _pair_coeffs(lams)
    vals = np.einsum("gi,ij,gj->g", u.conj(), q, u)
    return vals


def fidelity(x, lam, c: CodeSpace) -> float:
    """Fidelity of the channel on the code state with coefficients ``lam``.

    ``lam`` must be a unit vector of length L; the value is the real part of
    the quadratic form of the doubled state, whose imaginary part must vanish
    to 1e-10.
    """
    lam = np.asarray(lam, dtype=complex)
    if lam.shape != (c.logical_dim,):
        raise ValueError(f"expected {c.logical_dim} coefficients, got shape {lam.shape}")
    norm = float(np.linalg.norm(lam))
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"coefficient vector is not normalized: |lam| = {norm}")
    q = _compressed_form(x, c)
    val = complex(_eval_form(q, lam[None, :])[0])
    if abs(val.imag) > 1e-10:
        raise ValueError(f"fidelity has non-negligible imaginary part {val.imag:.3e}")
    return float(val.real)


def _gauge(lam):
    """Rotate the global phase so the first nonzero coefficient is real >= 0."""
    lam = np.asarray(lam, dtype=complex)
    idx = int(np.argmax(np.abs(lam) > 1e-14))
    phase = lam[idx] / abs(lam[idx]) if abs(lam[idx]) > 0 else 1.0
    return lam / phase


def worst_fidelity(x, c: CodeSpace, grid=(721, 720), samples=100_000, seed=0, polish=True) -> FidelityReport:
    """Minimize the fidelity over pure code states.

    For two-dimensional codes the coefficients (cos t, e^{i a} sin t) are
    scanned on an exhaustive t-by-a grid (default 721 x 720 over the quarter
    circle times the full phase) before a local simplex polish; larger codes
    use ``samples`` seeded random unit vectors and polish the ten best.
    """
    q = _compressed_form(x, c)
    l = c.logical_dim
    if l < 2:
        raise ValueError("worst-case search needs a code of dimension at least 2")

    if l == 2:
        n_t, n_a = grid
        thetas = np.linspace(0.0, np.pi / 2.0, n_t)
        phases = np.linspace(0.0, 2.0 * np.pi, n_a, endpoint=False)
        tt, aa = np.meshgrid(thetas, phases, indexing="ij")
        lams = np.stack(
            [np.cos(tt).ravel(), (np.exp(1j * aa) * np.sin(tt)).ravel()], axis=1
        )
        vals = _eval_form(q, lams).real
        best = int(np.argmin(vals))
        best_val, best_lam = float(vals[best]), lams[best]
        grid_desc = f"grid {n_t}x{n_a}"

        if polish:
            def objective(params):
                t, a = params
                lam = np.array([np.cos(t), np.exp(1j * a) * np.sin(t)])
                return float(_eval_form(q, lam[None, :])[0].real)

            start = np.array([tt.ravel()[best], aa.ravel()[best]])
            res = minimize(
                objective,
                start,
                method="Nelder-Mead",
                options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 2000},
            )
            if res.fun <= best_val:
                best_val = float(res.fun)
                t, a = res.x
                best_lam = np.array([np.cos(t), np.exp(1j * a) * np.sin(t)])
    else:
        rng = np.random.default_rng(seed)
        raw = rng.normal(size=(samples, l)) + 1j * rng.normal(size=(samples, l))
        lams = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        vals = _eval_form(q, lams).real
        order = np.argsort(vals)
        best = int(order[0])
        best_val, best_lam = float(vals[best]), lams[best]
        grid_desc = f"random {samples}"

        if polish:
            def objective(params):
                lam = params[:l] + 1j * params[l:]
                nrm = np.linalg.norm(lam)
                if nrm < 1e-12:
                    return 1e6
                lam = lam / nrm
                return float(_eval_form(q, lam[None, :])[0].real)

            for idx in order[:10]:
                start = np.concatenate([lams[idx].real, lams[idx].imag])
                res = minimize(
                    objective,
                    start,
                    method="Nelder-Mead",
                    options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000},
                )
                if res.fun < best_val:
                    best_val = float(res.fun)
                    lam = res.x[:l] + 1j * res.x[l:]
                    best_lam = lam / np.linalg.norm(lam)

    best_lam = _gauge(best_lam)
    best_lam = best_lam / np.linalg.norm(best_lam)
    # report the value at the reported state so the pair stays consistent
    best_val = float(_eval_form(q, best_lam[None, :])[0].real)
    return FidelityReport(
        min_fidelity=best_val,
        argmin_state=best_lam,
        grid=grid_desc + (" + polish" if polish else ""),
        refined=polish,
    )


def relaxed_worst(x, c: CodeSpace) -> float:
    """Smallest eigenvalue of the compressed Hermitian part.

    This minimizes the quadratic form over all unit vectors of the doubled
    code space, a superset of the doubled pure states, so it never exceeds
    the audited worst-case fidelity (up to solver noise).
    """
    xm = _mat_of(x)
    herm = (xm + xm.conj().T) / 2.0
    q = _compressed_form(herm, c)
    return float(np.linalg.eigvalsh((q + q.conj().T) / 2.0)[0])


# ---------------------------------------------------------------------------
# majority-rule baseline
# ---------------------------------------------------------------------------

def majority_rule_channel(p) -> TransferMatrix:
    """Effective single-qubit channel of the majority-vote repetition decode.

    Encodes |0> -> |000>, |1> -> |111>, applies the triple bit-flip channel,
    measures the pairwise-parity syndrome coherently, corrects, and unencodes.
    For p > 1/2 the decode table is inverted (each physical bit most likely
    flipped).  The endpoints p = 0, 1 are degenerate and rejected.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"flip probability {p} must lie strictly between 0 and 1")
    encode = np.zeros((8, 2), dtype=complex)
    encode[0, 0] = 1.0
    encode[7, 1] = 1.0

    # syndrome subspaces {pattern, complement}; the majority member decodes to |0>
    decoders = []
    for rep in (0b000, 0b001, 0b010, 0b100):
        lo, hi = rep, rep ^ 0b111          # lo has <= 1 ones, hi >= 2
        k = np.zeros((2, 8), dtype=complex)
        if p <= 0.5:
            k[0, lo] = 1.0
            k[1, hi] = 1.0
        else:
            k[0, hi] = 1.0
            k[1, lo] = 1.0
        decoders.append(k)

    error_ops = bit_flip_channel(p, 3).ops
    effective = [dec @ err @ encode for dec in decoders for err in error_ops]
    return transfer_from_kraus(KrausChannel(np.stack(effective)))


def majority_flip_probability(p) -> float:
    """Flip probability of the effective single-qubit majority-vote channel."""
    q = 1.0 - p
    if p <= 0.5:
        return p * p * (3.0 - 2.0 * p)
    return q * q * (1.0 + 2.0 * p)


def majority_min_fidelity(p) -> float:
    """Worst-case fidelity of the majority-vote decode over pure inputs."""
    return 1.0 - majority_flip_probability(p)


def majority_fidelity(p, lam) -> float:
    """Closed-form fidelity of the majority-vote decode at coefficients (a, b)."""
    a, b = complex(lam[0]), complex(lam[1])
    pe = majority_flip_probability(p)
    cross = abs(a.conjugate() * b) ** 2 + (a.conjugate() ** 2 * b**2).real
    return (1.0 - pe) + 2.0 * pe * cross


def bit_flip_pair_fidelity(p, lam) -> float:
    """Closed-form fidelity of the unrecovered two-qubit flip channel.

    Input a|00> + b|11>: the value is q^2 + 2 p^2 [|a* b|^2 + Re(a*^2 b^2)],
    minimized at q^2 by either basis code word.
    """
    a, b = complex(lam[0]), complex(lam[1])
    q = 1.0 - p
    cross = abs(a.conjugate() * b) ** 2 + (a.conjugate() ** 2 * b**2).real
    return q * q + 2.0 * p * p * cross


# ---------------------------------------------------------------------------
# scenario report
# ---------------------------------------------------------------------------

@dataclass
class ReportRow:
    name: str
    reference: float
    computed: float
    tolerance: float
    passed: bool          # None marks informative rows excluded from pass/fail
    detail: str = ""


@dataclass
class Report:
    rows: list

    @property
    def all_passed(self):
        return all(r.passed for r in self.rows if r.passed is not None)

    def as_text(self):
        header = f"{'scenario':<28} {'reference':>12} {'computed':>14} {'tolerance':>10}  verdict"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            verdict = "info" if r.passed is None else ("pass" if r.passed else "FAIL")
            lines.append(
                f"{r.name:<28} {r.reference:>12.6g} {r.computed:>14.9g} {r.tolerance:>10.2g}  {verdict}"
            )
        return "\n".join(lines)

    def as_json(self):
        return {
            "rows": [
                {
                    "name": r.name,
                    "reference": r.reference,
                    "computed": r.computed,
                    "tolerance": r.tolerance,
                    "passed": r.passed,
                    "detail": r.detail,
                }
                for r in self.rows
            ],
            "all_passed": self.all_passed,
        }


SCENARIOS = (
    "two_qubit_standard",
    "two_qubit_alternative",
    "formulation_gap",
    "three_qubit_p09",
    "three_qubit_p01",
    "majority_p09",
    "majority_p01",
    "no_recovery_worst",
    "no_coding_baseline",
    "gram_off_diagonal",
    "two_qubit_audit",
)


def reproduce_report(scenarios=None, gap_tol=1e-7, grid=(721, 720), verbose=False) -> Report:
    """Run the benchmark scenarios and tabulate reference vs computed values.

    Rows never raise: a scenario that misses its tolerance shows up as a
    failed row.  ``scenarios`` selects a subset by name (default: all).
    Synthesis results are shared between rows that need the same solve.
    """
    from .synthesis import SynthesisOptions, synthesize  # local import to keep layering

    wanted = list(SCENARIOS) if scenarios is None else list(scenarios)
    unknown = set(wanted) - set(SCENARIOS)
    if unknown:
        raise ValueError(f"unknown scenarios: {sorted(unknown)}")
    p = 0.9
    opts = SynthesisOptions(gap_tol=gap_tol, verbose=verbose)
    cache = {}

    def synth(key, channel, code, formulation):
        if key not in cache:
            cache[key] = synthesize(channel, code, formulation=formulation, options=opts)
        return cache[key]

    def two_qubit(formulation):
        return synth(
            ("2q", formulation), bit_flip_channel(p, 2), repetition_code(2), formulation
        )

    rows = []
    for name in wanted:
        if name == "two_qubit_standard":
            res = two_qubit("standard")
            rows.append(ReportRow(name, 0.196, res.epsilon, 0.005, abs(res.epsilon - 0.196) <= 0.005))
        elif name == "two_qubit_alternative":
            res = two_qubit("alternative")
            rows.append(ReportRow(name, 0.749, res.epsilon, 0.01, abs(res.epsilon - 0.749) <= 0.01))
        elif name == "formulation_gap":
            gap = two_qubit("alternative").epsilon - two_qubit("standard").epsilon
            rows.append(ReportRow(name, 0.553, gap, 0.02, abs(gap - 0.553) <= 0.02))
        elif name in ("three_qubit_p09", "three_qubit_p01"):
            pp = 0.9 if name.endswith("09") else 0.1
            res = synth(("3q", pp), bit_flip_channel(pp, 3), repetition_code(3), "standard")
            rows.append(ReportRow(name, 0.048, res.epsilon, 0.005, abs(res.epsilon - 0.048) <= 0.005))
        elif name in ("majority_p09", "majority_p01"):
            pp = 0.9 if name.endswith("09") else 0.1
            rep = worst_fidelity(majority_rule_channel(pp), full_space_code(2), grid=grid)
            rows.append(
                ReportRow(name, 0.972, rep.min_fidelity, 1e-9, abs(rep.min_fidelity - 0.972) <= 1e-9)
            )
        elif name == "no_recovery_worst":
            err = transfer_from_kraus(bit_flip_channel(p, 2))
            rep = worst_fidelity(err, repetition_code(2), grid=grid)
            rows.append(
                ReportRow(name, 0.01, rep.min_fidelity, 1e-9, abs(rep.min_fidelity - 0.01) <= 1e-9)
            )
        elif name == "no_coding_baseline":
            err = transfer_from_kraus(bit_flip_channel(p, 1))
            rep = worst_fidelity(err, full_space_code(2), grid=grid)
            rows.append(
                ReportRow(name, 0.1, rep.min_fidelity, 1e-9, abs(rep.min_fidelity - 0.1) <= 1e-9)
            )
        elif name == "gram_off_diagonal":
            err = transfer_from_kraus(bit_flip_channel(p, 2))
            gram = perfect_recovery_gram(err, repetition_code(2)).gram
            rows.append(
                ReportRow(
                    name,
                    0.6804,
                    float(gram[0, 1]),
                    1e-10,
                    abs(float(gram[0, 1]) - 0.6804) <= 1e-10,
                    detail="reference is the published closed form 3p^2q^2 + p^4",
                )
            )
        elif name == "two_qubit_audit":
            res = two_qubit("standard")
            err = transfer_from_kraus(bit_flip_channel(p, 2))
            composed = np.asarray(res.recovery.mat) @ np.asarray(err.mat)
            rep = worst_fidelity(composed, repetition_code(2), grid=grid)
            rows.append(
                ReportRow(
                    name,
                    0.860,
                    rep.min_fidelity,
                    0.0,
                    None,
                    detail="informative: audited worst case of this solver's recovery; "
                    "the asserted bound is guaranteed_fidelity",
                )
            )
    return Report(rows=rows)


def write_fidelity_sweep_csv(x, c: CodeSpace, path, n_theta=181, n_phi=180):
    """CSV sweep of the fidelity over the (theta, phase) grid of a 2D code."""
    if c.logical_dim != 2:
        raise ValueError("CSV sweeps are defined for two-dimensional codes")
    q = _compressed_form(x, c)
    thetas = np.linspace(0.0, np.pi / 2.0, n_theta)
    phases = np.linspace(0.0, 2.0 * np.pi, n_phi, endpoint=False)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "phi", "fidelity"])
        for t in thetas:
            lams = np.stack(
                [np.full(n_phi, np.cos(t)), np.exp(1j * phases) * np.sin(t)], axis=1
            )
            vals = _eval_form(q, lams).real
            for a, v in zip(phases, vals):
                writer.writerow([repr(float(t)), repr(float(a)), repr(float(v))])
