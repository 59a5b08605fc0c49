"""Reverse-mode gradients over a recorded contraction graph.

The tape records a small set of primitives (multilinear contractions,
stacked matrix products, losses, and a few elementwise helpers) as they
execute. ``backward`` walks the records in reverse and applies the matching
adjoint rule for each, accumulating across batch entries by summation.
Arrays are treated as immutable while a tape referencing them is alive.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, DimensionError, MpsError, NumericError
from .model import MpsClassifier
from .tensor import DTYPE, batched_matmul

_EINSUM_KINDS = ("contract", "absorb", "combine")


def _einsum(subscripts: str, *ops) -> np.ndarray:
    return np.einsum(subscripts, *ops, optimize=True)


def _adjacent_products(stack: np.ndarray, threads) -> np.ndarray:
    """Products of rows (0,1), (2,3), ... of ``stack`` over the last two axes."""
    pairs = stack.shape[0] // 2
    a = stack[0 : 2 * pairs : 2]
    b = stack[1 : 2 * pairs : 2]
    if threads is not None and threads != 1 and stack.ndim > 3:
        mat = stack.shape[-2:]
        flat = batched_matmul(
            np.ascontiguousarray(a).reshape(-1, *mat),
            np.ascontiguousarray(b).reshape(-1, *mat),
            threads=threads,
        )
        return flat.reshape(a.shape)
    return a @ b


def _pair_round_value(stack: np.ndarray, threads) -> np.ndarray:
    pairs = stack.shape[0] // 2
    prod = _adjacent_products(stack, threads)
    if stack.shape[0] % 2:
        return np.concatenate([prod, stack[2 * pairs :]], axis=0)
    return prod


def _one_hot(labels: np.ndarray, n_labels: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], n_labels), dtype=DTYPE)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted by the row max for stability."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class Node:
    """One recorded primitive application."""

    __slots__ = ("kind", "inputs", "needs", "output", "extra")

    def __init__(self, kind, inputs, needs, output, extra=None):
        self.kind = kind
        self.inputs = inputs
        self.needs = needs
        self.output = output
        self.extra = extra

    def recompute(self) -> np.ndarray:
        if self.kind in _EINSUM_KINDS:
            return _einsum(self.extra, *self.inputs)
        if self.kind in ("matmul", "batched_matmul"):
            return self.inputs[0] @ self.inputs[1]
        if self.kind == "pair_round":
            return _pair_round_value(self.inputs[0], self.extra)
        if self.kind == "gather":
            return self.inputs[0][self.extra]
        if self.kind == "slice_rows":
            start, stop = self.extra
            return self.inputs[0][start:stop]
        if self.kind == "add":
            return self.inputs[0] + self.inputs[1]
        if self.kind == "scale_const":
            return self.inputs[0] * self.extra
        if self.kind == "reduce_sum":
            return np.asarray(self.inputs[0].sum())
        if self.kind == "cross_entropy":
            labels, probs = self.extra
            logp = np.log(probs[np.arange(labels.shape[0]), labels])
            return np.asarray(-logp.mean())
        if self.kind == "mean_square":
            labels, onehot = self.extra
            diff = self.inputs[0] - onehot
            return np.asarray(0.5 * (diff * diff).sum(axis=1).mean())
        raise MpsError(f"unknown node kind {self.kind!r}")


class Tape:
    """Records primitive applications; with ``recording=False`` it only computes."""

    def __init__(self, recording: bool = True):
        self.recording = recording
        self.nodes: list[Node] = []
        self._live: set[int] = set()

    def watch(self, arr: np.ndarray) -> None:
        """Mark ``arr`` as a differentiation leaf."""
        self._live.add(id(arr))

    def watch_model(self, model: MpsClassifier) -> None:
        for _, arr in model.parameters():
            self.watch(arr)

    def _record(self, kind, inputs, output, extra=None) -> np.ndarray:
        if not self.recording:
            return output
        needs = tuple(id(op) in self._live for op in inputs)
        if any(needs):
            self.nodes.append(Node(kind, tuple(inputs), needs, output, extra))
            self._live.add(id(output))
        return output

    # -- primitives -------------------------------------------------------

    def contract(self, subscripts: str, *ops, kind: str = "contract") -> np.ndarray:
        """Multilinear einsum with no repeated index inside one operand."""
        out = _einsum(subscripts, *ops)
        return self._record(kind, ops, out, subscripts)

    def matmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Matrix product over the last two axes; leading axes must match."""
        if a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"matmul operands disagree: {a.shape} x {b.shape}")
        kind = "matmul" if a.ndim == 2 else "batched_matmul"
        return self._record(kind, (a, b), a @ b)

    def pair_round(self, stack: np.ndarray, threads: int | None = None) -> np.ndarray:
        """One reduction round: products of adjacent rows of [T, ..., k, k].

        Rows (0,1), (2,3), ... are multiplied; when T is odd the final row is
        carried through unchanged, so the output has ceil(T/2) rows and the
        overall ordered chain product is preserved.
        """
        if stack.ndim < 3 or stack.shape[-1] != stack.shape[-2]:
            raise DimensionError(
                f"pair_round expects a stack of square matrices, got {stack.shape}"
            )
        if stack.shape[0] < 2:
            raise DimensionError("pair_round needs at least two matrices")
        return self._record(
            "pair_round", (stack,), _pair_round_value(stack, threads), threads
        )

    def gather(self, x: np.ndarray, index: int) -> np.ndarray:
        """Select row ``index`` along the leading axis, differentiably."""
        index = int(index)
        if not 0 <= index < x.shape[0]:
            raise DimensionError(f"gather index {index} out of range for {x.shape}")
        return self._record("gather", (x,), x[index], index)

    def slice_rows(self, x: np.ndarray, start: int, stop: int) -> np.ndarray:
        """Rows ``start:stop`` along the leading axis, differentiably."""
        if not 0 <= start <= stop <= x.shape[0]:
            raise DimensionError(
                f"slice_rows [{start}:{stop}] out of range for {x.shape}"
            )
        return self._record("slice_rows", (x,), x[start:stop], (start, stop))

    def add(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if np.shape(a) != np.shape(b):
            raise DimensionError(f"add operands disagree: {np.shape(a)} x {np.shape(b)}")
        return self._record("add", (a, b), a + b)

    def scale_const(self, x: np.ndarray, c) -> np.ndarray:
        """Multiply by a constant factor that is NOT differentiated through."""
        return self._record("scale_const", (x,), x * c, np.asarray(c, dtype=DTYPE))

    def reduce_sum(self, x: np.ndarray) -> np.ndarray:
        return self._record("reduce_sum", (x,), np.asarray(x.sum()))

    def cross_entropy(self, logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Mean negative log softmax of the true-label logit."""
        from .losses import cross_entropy_with_grad

        value, _, probs = cross_entropy_with_grad(logits, labels)
        return self._record(
            "cross_entropy", (logits,), np.asarray(value), (labels, probs)
        )

    def mean_square(self, logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Mean over the batch of half the squared distance to the one-hot target."""
        from .losses import mean_square_with_grad

        value, _, onehot = mean_square_with_grad(logits, labels)
        return self._record(
            "mean_square", (logits,), np.asarray(value), (labels, onehot)
        )

    # -- bookkeeping -------------------------------------------------------

    def replay(self) -> None:
        """Re-execute every node and verify outputs bit-exactly."""
        for i, node in enumerate(self.nodes):
            again = node.recompute()
            if not np.array_equal(again, node.output):
                raise ConsistencyError(
                    f"tape replay diverged at node {i} ({node.kind})"
                )

    def forward_flops(self) -> int:
        return sum(_node_forward_flops(n) for n in self.nodes)

    def backward_flops(self) -> int:
        return sum(_node_backward_flops(n) for n in self.nodes)


def _subscript_extents(subscripts: str, ops) -> dict[str, int]:
    ins = subscripts.split("->")[0].split(",")
    extents: dict[str, int] = {}
    for sub, op in zip(ins, ops):
        for ch, n in zip(sub, op.shape):
            extents[ch] = n
    return extents


def _node_forward_flops(node: Node) -> int:
    if node.kind in _EINSUM_KINDS:
        ext = _subscript_extents(node.extra, node.inputs)
        return 2 * int(np.prod(list(ext.values())))
    if node.kind in ("matmul", "batched_matmul"):
        a, b = node.inputs
        slices = int(np.prod(a.shape[:-2])) if a.ndim > 2 else 1
        return 2 * slices * a.shape[-2] * a.shape[-1] * b.shape[-1]
    if node.kind == "pair_round":
        stack = node.inputs[0]
        pairs = stack.shape[0] // 2
        slices = int(np.prod(stack.shape[1:-2])) if stack.ndim > 3 else 1
        k = stack.shape[-1]
        return 2 * pairs * slices * k * k * k
    if node.kind in ("gather", "slice_rows"):
        return 0
    if node.kind in ("cross_entropy", "mean_square"):
        return 3 * node.inputs[0].size
    return node.output.size if node.output.ndim else node.inputs[0].size


def _node_backward_flops(node: Node) -> int:
    if node.kind in _EINSUM_KINDS:
        ext = _subscript_extents(node.extra, node.inputs)
        per = 2 * int(np.prod(list(ext.values())))
        return per * sum(node.needs)
    if node.kind in ("matmul", "batched_matmul"):
        return _node_forward_flops(node) * sum(node.needs)
    if node.kind == "pair_round":
        # dA and dB per pair: two products for each forward product.
        return 2 * _node_forward_flops(node)
    return _node_forward_flops(node)


class Adjoints:
    """Accumulated adjoints from one backward pass, looked up by array identity."""

    def __init__(self, acc: dict[int, np.ndarray], watched: set[int]):
        self._acc = acc
        self._watched = watched

    def of(self, arr: np.ndarray) -> np.ndarray:
        got = self._acc.get(id(arr))
        if got is None:
            return np.zeros_like(arr)
        return got

    def was_watched(self, arr: np.ndarray) -> bool:
        return id(arr) in self._watched


def _accumulate(acc: dict, key: int, val: np.ndarray, fresh: bool) -> None:
    if key in acc:
        acc[key] += val
    else:
        # Pass-through adjoints may alias arrays owned by other records;
        # copy those before they can be mutated by later accumulation.
        acc[key] = val if fresh else val.copy()


def _input_adjoints(node: Node, g: np.ndarray):
    """Yield (input index, adjoint, freshly allocated) for graded inputs."""
    kind = node.kind
    if kind in _EINSUM_KINDS:
        ins, out = node.extra.split("->")
        ins = ins.split(",")
        for i, need in enumerate(node.needs):
            if not need:
                continue
            parts = [out if j == i else ins[j] for j in range(len(ins))]
            operands = [g if j == i else node.inputs[j] for j in range(len(ins))]
            adj = _einsum(",".join(parts) + "->" + ins[i], *operands)
            yield i, adj, True
        return
    if kind in ("matmul", "batched_matmul"):
        a, b = node.inputs
        if node.needs[0]:
            yield 0, g @ np.swapaxes(b, -1, -2), True
        if node.needs[1]:
            yield 1, np.swapaxes(a, -1, -2) @ g, True
        return
    if kind == "pair_round":
        stack = node.inputs[0]
        pairs = stack.shape[0] // 2
        a = stack[0 : 2 * pairs : 2]
        b = stack[1 : 2 * pairs : 2]
        gp = g[:pairs]
        dx = np.empty_like(stack)
        dx[0 : 2 * pairs : 2] = gp @ np.swapaxes(b, -1, -2)
        dx[1 : 2 * pairs : 2] = np.swapaxes(a, -1, -2) @ gp
        if stack.shape[0] % 2:
            dx[2 * pairs :] = g[pairs:]
        yield 0, dx, True
        return
    if kind == "gather":
        adj = np.zeros_like(node.inputs[0])
        adj[node.extra] = g
        yield 0, adj, True
        return
    if kind == "slice_rows":
        start, stop = node.extra
        adj = np.zeros_like(node.inputs[0])
        adj[start:stop] = g
        yield 0, adj, True
        return
    if kind == "add":
        if node.needs[0]:
            yield 0, g, False
        if node.needs[1]:
            yield 1, g, False
        return
    if kind == "scale_const":
        yield 0, g * node.extra, True
        return
    if kind == "reduce_sum":
        yield 0, np.full_like(node.inputs[0], float(g)), True
        return
    if kind == "cross_entropy":
        labels, probs = node.extra
        onehot = _one_hot(labels, probs.shape[1])
        yield 0, float(g) * (probs - onehot) / labels.shape[0], True
        return
    if kind == "mean_square":
        labels, onehot = node.extra
        yield 0, float(g) * (node.inputs[0] - onehot) / labels.shape[0], True
        return
    raise MpsError(f"unknown node kind {kind!r}")


def backward(tape: Tape, loss_adjoint: float = 1.0) -> Adjoints:
    """Apply adjoint rules in reverse tape order, seeding the final output.

    The seed fills the last recorded output (broadcast for non-scalar
    outputs), so a tape ending in a loss node receives the scalar loss
    adjoint directly.
    """
    if not tape.recording:
        raise ConsistencyError("cannot run backward over a non-recording tape")
    acc: dict[int, np.ndarray] = {}
    if tape.nodes:
        final = tape.nodes[-1].output
        acc[id(final)] = np.full(final.shape, loss_adjoint, dtype=DTYPE)
    for node in reversed(tape.nodes):
        g = acc.get(id(node.output))
        if g is None:
            continue
        for i, adj, fresh in _input_adjoints(node, g):
            _accumulate(acc, id(node.inputs[i]), adj, fresh)
    return Adjoints(acc, set(tape._live))


@dataclass
class Gradients:
    """Loss gradients shaped exactly like the model's weight arrays."""

    left_boundary: np.ndarray
    cores: np.ndarray
    label_core: np.ndarray
    right_boundary: np.ndarray

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("left_boundary", self.left_boundary),
            ("cores", self.cores),
            ("label_core", self.label_core),
            ("right_boundary", self.right_boundary),
        ]

    def check_finite(self) -> "Gradients":
        for name, arr in self.arrays():
            if not np.isfinite(arr).all():
                raise NumericError(f"non-finite gradient in {name}")
        return self


def model_gradients(adjoints: Adjoints, model: MpsClassifier) -> Gradients:
    """Assemble model-shaped gradients from a backward pass."""
    grads = {}
    for name, arr in model.parameters():
        if not adjoints.was_watched(arr):
            raise ConsistencyError(
                f"model array {name!r} was not watched by this tape"
            )
        grads[name] = adjoints.of(arr)
    return Gradients(
        left_boundary=grads["left_boundary"],
        cores=grads["cores"],
        label_core=grads["label_core"],
        right_boundary=grads["right_boundary"],
    )


@dataclass
class GradCheckEntry:
    name: str
    n_params: int
    max_rel_err: float
    worst_index: tuple
    analytic: float
    numeric: float


@dataclass
class GradCheckReport:
    entries: list[GradCheckEntry]
    max_rel_err: float
    tolerance: float
    step: float
    passed: bool

    def format_table(self) -> str:
        lines = [
            f"{'core':<16}{'params':>8}{'max rel err':>14}  worst (analytic vs numeric)"
        ]
        for e in self.entries:
            lines.append(
                f"{e.name:<16}{e.n_params:>8}{e.max_rel_err:>14.3e}  "
                f"{e.analytic: .6e} vs {e.numeric: .6e} @ {e.worst_index}"
            )
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(
            f"{verdict}: max relative error {self.max_rel_err:.3e} "
            f"(tolerance {self.tolerance:.1e}, h={self.step:.1e})"
        )
        return "\n".join(lines)


def grad_check(
    model: MpsClassifier,
    images: np.ndarray,
    labels: np.ndarray,
    h: float = 1e-5,
    tolerance: float = 1e-6,
    loss_kind=None,
    atol: float = 1e-3,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``images`` is a [B, N] batch of normalized pixels. For every scalar
    parameter theta the analytic entry is compared with
    (loss(theta + h) - loss(theta - h)) / 2h. The relative error uses
    denominator max(|analytic|, |numeric|, atol): entries below ``atol``
    are compared absolutely against it, which keeps finite-difference
    roundoff (of order 1e-10 for unit-scale losses) from dominating
    near-zero gradient entries. Cost is two forward passes per parameter.
    """
    from .encoding import encode_batch
    from .training import LossKind, batch_loss, loss_and_gradients

    if loss_kind is None:
        loss_kind = LossKind.CROSS_ENTROPY
    feats = encode_batch(model.feature_map, images)
    labels = np.asarray(labels)

    _, grads = loss_and_gradients(model, feats, labels, loss_kind=loss_kind)

    entries = []
    overall = 0.0
    for name, arr in model.parameters():
        analytic = dict(grads.arrays())[name]
        worst = (0.0, (0,) * arr.ndim, 0.0, 0.0)
        flat = arr.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = batch_loss(model, feats, labels, loss_kind=loss_kind)
            flat[k] = orig - h
            down = batch_loss(model, feats, labels, loss_kind=loss_kind)
            flat[k] = orig
            numeric = (up - down) / (2.0 * h)
            a = analytic.reshape(-1)[k]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), atol)
            if rel >= worst[0]:
                index = tuple(int(i) for i in np.unravel_index(k, arr.shape))
                worst = (rel, index, float(a), numeric)
        entries.append(
            GradCheckEntry(
                name=name,
                n_params=arr.size,
                max_rel_err=worst[0],
                worst_index=worst[1],
                analytic=worst[2],
                numeric=worst[3],
            )
        )
        overall = max(overall, worst[0])
    return GradCheckReport(
        entries=entries,
        max_rel_err=overall,
        tolerance=tolerance,
        step=h,
        passed=bool(overall <= tolerance),
    )
