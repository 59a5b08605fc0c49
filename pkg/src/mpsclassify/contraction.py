"""Per-label score evaluation by tensor-network contraction.

Two production schedules plus a brute-force oracle:

* ``sequential``: absorb each pixel, then sweep a vector from each end of
  the chain toward the label site, combining there so the label count L
  enters only the final step. Matrix-vector work throughout.
* ``pairwise``: absorb every pixel at once, then repeatedly multiply
  adjacent effective matrices in rounds. All products of a round are
  independent, which makes the schedule batch- and thread-friendly at the
  price of matrix-matrix (chi^3) products. An odd matrix at the end of a
  round is carried to the next round unpaired.
* ``brute force``: the literal sum over every pixel-index assignment,
  guarded to small chains. Exists to anchor the fast schedules.

The chain is split at the label core; each half reduces independently and
the halves meet at the label block, so L never multiplies the inner work.
"""

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .encoding import encode_batch
from .errors import ConfigError, DimensionError, NumericError
from .model import MpsClassifier
from .tensor import DTYPE

BRUTE_FORCE_MAX_SITES = 12

# Floor for renormalization scales; an exactly zero half collapses to zero
# logits and must not divide by zero.
_SCALE_FLOOR = 1e-300


class Strategy(enum.Enum):
    SEQUENTIAL = "sequential"
    PAIRWISE = "pairwise"
    BRUTE_FORCE = "brute-force"


@dataclass
class PlanStep:
    label: str
    m: int
    k: int
    n: int
    count: int

    @property
    def flops(self) -> int:
        return 2 * self.m * self.k * self.n * self.count


@dataclass
class ContractionPlan:
    """Recorded per-step operand shapes and arithmetic cost of one forward pass."""

    strategy: Strategy
    steps: list[PlanStep] = field(default_factory=list)

    def add(self, label: str, m: int, k: int, n: int, count: int) -> None:
        self.steps.append(PlanStep(label, m, k, n, count))

    @property
    def total_flops(self) -> int:
        return sum(s.flops for s in self.steps)

    def flops_matching(self, prefix: str) -> int:
        return sum(s.flops for s in self.steps if s.label.startswith(prefix))


@dataclass
class EffectiveChain:
    """Result of absorbing one image: the chain with pixel indices removed."""

    left: np.ndarray          # [chi]
    matrices: np.ndarray      # [N-3, chi, chi], ascending site order
    label_block: np.ndarray   # [L, chi, chi]
    right: np.ndarray         # [chi]


def num_pairwise_rounds(n_matrices: int) -> int:
    """Rounds needed to reduce a chain of matrices to a single one."""
    if n_matrices <= 1:
        return 0
    return int(np.ceil(np.log2(n_matrices)))


def _check_batch_features(model: MpsClassifier, feats: np.ndarray) -> np.ndarray:
    feats = np.ascontiguousarray(feats, dtype=DTYPE)
    if feats.ndim != 3:
        raise DimensionError(f"expected [B, N, d] features, got shape {feats.shape}")
    if feats.shape[1] != model.n_sites:
        raise DimensionError(
            f"image has {feats.shape[1]} sites but model expects {model.n_sites}"
        )
    if feats.shape[2] != model.local_dim:
        raise DimensionError(
            f"feature dimension {feats.shape[2]} does not match model d={model.local_dim}"
        )
    return feats


def _mid_site_order(model: MpsClassifier) -> list[int]:
    m = model.label_site
    return [k for k in range(1, model.n_sites - 1) if k != m]


def absorb_inputs(model: MpsClassifier, image: np.ndarray) -> EffectiveChain:
    """Contract every pixel index of one encoded image ([N, d]) into the chain."""
    image = np.ascontiguousarray(image, dtype=DTYPE)
    if image.ndim != 2:
        raise DimensionError(f"expected [N, d] encoded image, got shape {image.shape}")
    _check_batch_features(model, image[None])
    m = model.label_site
    mids = image[_mid_site_order(model)]
    return EffectiveChain(
        left=image[0] @ model.left_boundary,
        matrices=np.einsum("sd,sdxy->sxy", mids, model.cores, optimize=True),
        label_block=np.einsum("d,dlxy->lxy", image[m], model.label_core, optimize=True),
        right=image[model.n_sites - 1] @ model.right_boundary,
    )


def _absorb_batch(model, feats, tape, plan):
    batch = feats.shape[0]
    d, chi, big_l = model.local_dim, model.bond_dim, model.n_labels
    m = model.label_site
    mid_sites = _mid_site_order(model)

    lv = tape.contract("bd,dx->bx", feats[:, 0, :], model.left_boundary, kind="absorb")
    mids = tape.contract(
        "bsd,sdxy->sbxy", feats[:, mid_sites, :], model.cores, kind="absorb"
    )
    lab = tape.contract("bd,dlxy->blxy", feats[:, m, :], model.label_core, kind="absorb")
    rv = tape.contract(
        "bd,dx->bx", feats[:, model.n_sites - 1, :], model.right_boundary, kind="absorb"
    )
    if plan is not None:
        plan.add("absorb:boundaries", 1, d, chi, 2 * batch)
        plan.add("absorb:mid", 1, d, chi * chi, len(mid_sites) * batch)
        plan.add("absorb:label", 1, d, big_l * chi * chi, batch)
    return lv, mids, lab, rv


def _rescale_stack(tape, stack, logscale):
    scales = np.abs(stack).max(axis=(-2, -1), keepdims=True)
    scales = np.maximum(scales, _SCALE_FLOOR)
    out = tape.scale_const(stack, 1.0 / scales)
    logscale += np.log(scales[..., 0, 0]).sum(axis=0)
    return out


def _reduce_half(tape, stack, half_name, plan, renormalize, logscale, threads):
    """Pairwise rounds until one [B, chi, chi] matrix remains; None if empty."""
    if stack.shape[0] == 0:
        return None
    chi = stack.shape[-1]
    batch = stack.shape[1]
    rnd = 0
    while stack.shape[0] > 1:
        rnd += 1
        pairs = stack.shape[0] // 2
        if plan is not None:
            plan.add(f"pair_round:{half_name}:{rnd}", chi, chi, chi, pairs * batch)
        stack = tape.pair_round(stack, threads=threads)
        if renormalize:
            stack = _rescale_stack(tape, stack, logscale)
    return tape.gather(stack, 0)


def _combine(model, tape, plan, lv, left_mat, lab, right_mat, rv):
    batch = lv.shape[0]
    chi, big_l = model.bond_dim, model.n_labels
    if left_mat is not None:
        lv = tape.contract("bx,bxy->by", lv, left_mat, kind="combine")
        if plan is not None:
            plan.add("combine:left_vec", 1, chi, chi, batch)
    if right_mat is not None:
        rv = tape.contract("bxy,by->bx", right_mat, rv, kind="combine")
        if plan is not None:
            plan.add("combine:right_vec", 1, chi, chi, batch)
    logits = tape.contract("bx,blxy,by->bl", lv, lab, rv, kind="combine")
    if plan is not None:
        plan.add("combine:label", big_l, chi, chi, batch)
        plan.add("combine:label_vec", big_l, chi, 1, batch)
    return logits


def _forward_pairwise_batch(model, feats, tape, plan, renormalize, threads):
    batch = feats.shape[0]
    lv, mids, lab, rv = _absorb_batch(model, feats, tape, plan)
    n_left = model.label_site - 1
    n_mid = mids.shape[0]
    logscale = np.zeros(batch, dtype=DTYPE)
    left_mat = _reduce_half(
        tape, tape.slice_rows(mids, 0, n_left), "left", plan, renormalize, logscale, threads
    )
    right_mat = _reduce_half(
        tape, tape.slice_rows(mids, n_left, n_mid), "right", plan, renormalize, logscale, threads
    )
    logits = _combine(model, tape, plan, lv, left_mat, lab, right_mat, rv)
    if renormalize:
        logits = tape.scale_const(logits, np.exp(logscale)[:, None])
    return logits


def _forward_sequential_batch(model, feats, tape, plan, renormalize, threads):
    batch = feats.shape[0]
    d, chi = model.local_dim, model.bond_dim
    m = model.label_site
    logscale = np.zeros(batch, dtype=DTYPE)

    lv = tape.contract("bd,dx->bx", feats[:, 0, :], model.left_boundary, kind="absorb")
    rv = tape.contract(
        "bd,dx->bx", feats[:, model.n_sites - 1, :], model.right_boundary, kind="absorb"
    )
    lab = tape.contract("bd,dlxy->blxy", feats[:, m, :], model.label_core, kind="absorb")
    if plan is not None:
        plan.add("absorb:boundaries", 1, d, chi, 2 * batch)
        plan.add("absorb:label", 1, d, model.n_labels * chi * chi, batch)

    def site_matrix(site):
        core = tape.gather(model.cores, model.core_stack_index(site))
        eff = tape.contract("bd,dxy->bxy", feats[:, site, :], core, kind="absorb")
        if plan is not None:
            plan.add("absorb:site", 1, d, chi * chi, batch)
        return eff

    for site in range(1, m):
        lv = tape.contract("bx,bxy->by", lv, site_matrix(site), kind="contract")
        if renormalize:
            lv, logscale = _rescale_vec(tape, lv, logscale)
    for site in range(model.n_sites - 2, m, -1):
        rv = tape.contract("bxy,by->bx", site_matrix(site), rv, kind="contract")
        if renormalize:
            rv, logscale = _rescale_vec(tape, rv, logscale)
    if plan is not None:
        n_steps = model.n_sites - 3
        plan.add("sweep:vecmat", 1, chi, chi, n_steps * batch)

    logits = _combine(model, tape, plan, lv, None, lab, None, rv)
    if renormalize:
        logits = tape.scale_const(logits, np.exp(logscale)[:, None])
    return logits


def _rescale_vec(tape, vec, logscale):
    scales = np.maximum(np.abs(vec).max(axis=-1, keepdims=True), _SCALE_FLOOR)
    return tape.scale_const(vec, 1.0 / scales), logscale + np.log(scales[:, 0])


def forward_batch(
    model: MpsClassifier,
    feats: np.ndarray,
    strategy: Strategy = Strategy.PAIRWISE,
    tape: Tape | None = None,
    plan: ContractionPlan | None = None,
    renormalize: bool = False,
    threads: int | None = None,
) -> np.ndarray:
    """Logits [B, L] for a batch of encoded images [B, N, d]."""
    feats = _check_batch_features(model, feats)
    if tape is None:
        tape = Tape(recording=False)
    if strategy is Strategy.PAIRWISE:
        return _forward_pairwise_batch(model, feats, tape, plan, renormalize, threads)
    if strategy is Strategy.SEQUENTIAL:
        return _forward_sequential_batch(model, feats, tape, plan, renormalize, threads)
    if strategy is Strategy.BRUTE_FORCE:
        return np.stack([brute_force_logits(model, feats[b]) for b in range(feats.shape[0])])
    raise ConfigError(f"unknown strategy {strategy!r}")


def forward_pairwise(
    model: MpsClassifier,
    image: np.ndarray,
    plan: ContractionPlan | None = None,
    renormalize: bool = False,
) -> np.ndarray:
    """Logits for one encoded image via the parallel pairwise schedule."""
    return forward_batch(
        model, np.asarray(image)[None], Strategy.PAIRWISE, plan=plan, renormalize=renormalize
    )[0]


def forward_sequential(
    model: MpsClassifier,
    image: np.ndarray,
    plan: ContractionPlan | None = None,
    renormalize: bool = False,
) -> np.ndarray:
    """Logits for one encoded image via the two-ended sequential sweep."""
    return forward_batch(
        model, np.asarray(image)[None], Strategy.SEQUENTIAL, plan=plan, renormalize=renormalize
    )[0]


def brute_force_logits(model: MpsClassifier, image: np.ndarray) -> np.ndarray:
    """Literal sum over all 2^N pixel-index assignments; oracle for small N.

    For each assignment the chain entry is evaluated as an explicit product
    of the selected matrix slices, then weighted by the product of feature
    components. Costs 2^N work and is refused beyond N=12.
    """
    n = model.n_sites
    if n > BRUTE_FORCE_MAX_SITES:
        raise ConfigError(
            f"brute force refused for N={n} > {BRUTE_FORCE_MAX_SITES} "
            f"(2^N-term sum)"
        )
    image = np.ascontiguousarray(image, dtype=DTYPE)
    _check_batch_features(model, image[None])
    m = model.label_site
    logits = np.zeros(model.n_labels, dtype=DTYPE)
    for assignment in itertools.product(range(model.local_dim), repeat=n):
        weight = 1.0
        for k in range(n):
            weight *= image[k, assignment[k]]
        v = model.left_boundary[assignment[0]]
        for site in range(1, m):
            v = v @ model.cores[model.core_stack_index(site)][assignment[site]]
        u = model.right_boundary[assignment[n - 1]]
        for site in range(n - 2, m, -1):
            u = model.cores[model.core_stack_index(site)][assignment[site]] @ u
        per_label = model.label_core[assignment[m]] @ u
        logits += weight * (per_label @ v)
    return logits


def predict(logits: np.ndarray) -> int:
    """Index of the largest logit; ties break to the lowest index."""
    logits = np.asarray(logits, dtype=DTYPE)
    if logits.ndim != 1 or logits.shape[0] < 2:
        raise DimensionError(f"predict expects at least two logits, got shape {logits.shape}")
    if not np.isfinite(logits).all():
        raise NumericError(f"non-finite logits in predict: {logits}")
    return int(np.argmax(logits))


def predict_batch(logits: np.ndarray) -> np.ndarray:
    """Row-wise argmax with lowest-index tie-breaking."""
    logits = np.asarray(logits, dtype=DTYPE)
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise DimensionError(f"predict_batch expects [B, L>=2] logits, got {logits.shape}")
    if not np.isfinite(logits).all():
        raise NumericError("non-finite logits in predict_batch")
    return np.argmax(logits, axis=1)


def encode_and_forward(
    model: MpsClassifier,
    images: np.ndarray,
    strategy: Strategy = Strategy.PAIRWISE,
    renormalize: bool = False,
) -> np.ndarray:
    """Convenience: encode raw [B, N] pixels with the model's feature map, then contract."""
    feats = encode_batch(model.feature_map, images)
    return forward_batch(model, feats, strategy, renormalize=renormalize)
