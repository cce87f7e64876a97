"""Candidate scoring, optimal-result selection and the evolving solution bank.

The bank stores, per pair, the best fused candidate seen so far. Updates
re-normalize the combined score over just {incumbent, newcomer} and keep
the winner, so the stored entry only ever improves.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionError,
    EmptyInputError,
    IoError,
    NotEvaluatedError,
    ParseError,
)
from .fusion import DEFAULT_ALGOS, FusionCandidate, run_bank
from .image import ImageGray, ImagePair, load_pgm, save_pgm
from .metrics import (
    QualityScores,
    avg_gradient,
    brenner,
    combined_score,
    entropy,
    mutual_information,
    psnr,
    ssim,
    viff,
)
from .niqe import NiqeModel, niqe_score

# candidates closer than one 8-bit quantization step count as identical
SAME_IMAGE_TOL = 1.0 / 510.0


@dataclass
class SolutionBank:
    """Per-pair store of the current relative optimal solution."""

    entries: dict[str, FusionCandidate] = field(default_factory=dict)
    generation: int = 0
    weights: dict[str, float] | None = None


def score_candidate(pair: ImagePair, fused: ImageGray, niqe_model: NiqeModel | None) -> QualityScores:
    """All raw metrics of one fused image against both sources.

    Full-reference metrics are computed against a and b separately; VIFF is
    reported as the mean over the two references. NIQE is skipped when no
    model is supplied.
    """
    if fused.shape != pair.a.shape:
        raise DimensionError(f"fused shape {fused.shape} != pair {pair.a.shape}")
    return QualityScores(
        en=entropy(fused),
        ag=avg_gradient(fused),
        brenner=brenner(fused),
        ssim_a=ssim(pair.a, fused),
        ssim_b=ssim(pair.b, fused),
        psnr_a=psnr(pair.a, fused),
        psnr_b=psnr(pair.b, fused),
        mi_a=mutual_information(pair.a, fused),
        mi_b=mutual_information(pair.b, fused),
        viff=(viff(pair.a, fused) + viff(pair.b, fused)) / 2.0,
        niqe=niqe_score(fused, niqe_model) if niqe_model is not None else None,
    )


def evaluate_candidates(
    pair: ImagePair,
    candidates: list[FusionCandidate],
    niqe_model: NiqeModel | None,
    weights: dict[str, float] | None = None,
) -> list[FusionCandidate]:
    """Populate every candidate's scores and pool-relative combined value."""
    if not candidates:
        raise EmptyInputError("no candidates to evaluate")
    for cand in candidates:
        if cand.scores is None:
            cand.scores = score_candidate(pair, cand.fused, niqe_model)
    combined = combined_score([c.scores for c in candidates], weights)
    for cand, value in zip(candidates, combined):
        cand.scores.combined = value
    return candidates


def select_optimal(scored: list[FusionCandidate]) -> FusionCandidate:
    """Argmax of combined score; ties go to the lexicographically smallest id."""
    if not scored:
        raise EmptyInputError("no candidates to select from")
    for cand in scored:
        if cand.scores is None or cand.scores.combined is None:
            raise NotEvaluatedError(f"candidate {cand.algo_id!r} has no combined score")
    return min(scored, key=lambda c: (-c.scores.combined, c.algo_id))


def update_bank(
    bank: SolutionBank,
    pair_id: str,
    new_candidate: FusionCandidate,
    pair: ImagePair,
    niqe_model: NiqeModel | None,
) -> SolutionBank:
    """Offer a candidate; keep the pairwise-contest winner.

    The stored combined value is a monotone watermark: the maximum combined
    observed for the entry across all contests, so it never decreases.
    An incumbent win leaves the entry untouched; a newcomer identical to the
    incumbent (every pixel within 1/510) short-circuits to a no-op.
    """
    if new_candidate.fused.shape != pair.a.shape:
        raise DimensionError(
            f"candidate shape {new_candidate.fused.shape} != pair {pair.a.shape}"
        )
    incumbent = bank.entries.get(pair_id)
    if incumbent is None:
        evaluate_candidates(pair, [new_candidate], niqe_model, bank.weights)
        bank.entries[pair_id] = new_candidate
        return bank
    if float(np.max(np.abs(incumbent.fused.data - new_candidate.fused.data))) <= SAME_IMAGE_TOL:
        return bank
    if incumbent.scores is None:
        incumbent.scores = score_candidate(pair, incumbent.fused, niqe_model)
    if new_candidate.scores is None:
        new_candidate.scores = score_candidate(pair, new_candidate.fused, niqe_model)
    inc_combined, new_combined = combined_score(
        [incumbent.scores, new_candidate.scores], bank.weights
    )
    if new_combined > inc_combined:
        old_mark = incumbent.scores.combined
        new_candidate.scores.combined = (
            new_combined if old_mark is None else max(new_combined, old_mark)
        )
        bank.entries[pair_id] = new_candidate
    return bank


def init_bank(
    dataset: list[ImagePair],
    niqe_model: NiqeModel | None,
    algos=None,
    weights: dict[str, float] | None = None,
) -> SolutionBank:
    """Classical selection: run the algorithm bank and store each pair's best."""
    if algos is None:
        algos = DEFAULT_ALGOS
    bank = SolutionBank(weights=weights)
    for pair in dataset:
        scored = evaluate_candidates(pair, run_bank(pair, algos), niqe_model, weights)
        bank.entries[pair.pair_id] = select_optimal(scored)
    return bank


# ---------------------------------------------------------------------------
# Persistence: one PGM per pair plus a line-oriented manifest
# (pair_id, algo_id, combined to 6 decimals, relative PGM path), sorted by
# pair_id and written atomically.
# ---------------------------------------------------------------------------

MANIFEST_NAME = "manifest.txt"


def save_bank(bank: SolutionBank, directory) -> Path:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for pair_id in sorted(bank.entries):
        entry = bank.entries[pair_id]
        rel = f"{pair_id}.pgm"
        save_pgm(entry.fused, root / rel)
        combined = entry.scores.combined if entry.scores is not None else float("nan")
        lines.append(f"{pair_id}\t{entry.algo_id}\t{combined:.6f}\t{rel}\n")
    fd, tmp = tempfile.mkstemp(dir=root, prefix=".manifest-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.writelines(lines)
        os.replace(tmp, root / MANIFEST_NAME)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return root / MANIFEST_NAME


def load_bank(directory) -> SolutionBank:
    """Rebuild a bank from disk; raw metric scores are left unpopulated and
    are recomputed lazily on the next update."""
    root = Path(directory)
    manifest = root / MANIFEST_NAME
    if not manifest.exists():
        raise IoError(f"no manifest at {manifest}")
    bank = SolutionBank()
    for lineno, line in enumerate(manifest.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ParseError(f"{manifest}:{lineno}: expected 4 fields, got {len(parts)}")
        pair_id, algo_id, _combined, rel = parts
        bank.entries[pair_id] = FusionCandidate(algo_id, load_pgm(root / rel))
    return bank
