"""Q-network over point sets: EdgeConv feature extraction, global max feature,
per-point MLP head, with a hand-written backward pass.

Arrays are batched as (B, N, C).  Single-state helpers wrap them with B = 1.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

LEAK = 0.2


def lrelu(x):
    return np.maximum(x, LEAK * x)


def lrelu_grad(z):
    return np.where(z > 0, 1.0, LEAK)


@dataclass(frozen=True, eq=False)
class StateEncoding:
    """Rows of ``H`` are point features; ``b_vec``/``v_vec`` are +-1 flags
    for basis membership and removal."""

    H: np.ndarray
    b_vec: np.ndarray
    v_vec: np.ndarray
    basis: np.ndarray

    @property
    def inputs(self):
        return np.column_stack([self.H, self.b_vec, self.v_vec])


def encode_state(dataset, state):
    N = dataset.N
    b_vec = -np.ones(N)
    b_vec[state.fit.basis_global] = 1.0
    v_vec = np.where(state.removed_mask, 1.0, -1.0)
    return StateEncoding(dataset.features, b_vec, v_vec,
                         np.asarray(state.fit.basis_global, dtype=int))


class NetworkParams:
    """Named weight arrays in a fixed declaration order plus the kNN size."""

    def __init__(self, arrays, k):
        self.arrays = dict(arrays)
        self.k = int(k)
        self._check()

    def _check(self):
        names = list(self.arrays)
        n_edge = sum(1 for n in names if n.startswith("ec") and n.endswith(".W"))
        if n_edge < 1:
            raise ContractError("network needs at least one EdgeConv layer")
        c = self.arrays["ec1.W"].shape[1] // 2
        for i in range(1, n_edge + 1):
            W = self.arrays[f"ec{i}.W"]
            if W.shape[1] != 2 * c or self.arrays[f"ec{i}.b"].shape != (W.shape[0],):
                raise ContractError(f"layer ec{i} has inconsistent shape {W.shape}")
            c = W.shape[0]
        g = self.arrays["glob.W"].shape[0]
        if self.arrays["glob.W"].shape[1] != c:
            raise ContractError("layer glob does not match the last EdgeConv width")
        width = c + g
        for name in self.mlp_names:
            W = self.arrays[name + ".W"]
            if W.shape[1] != width or self.arrays[name + ".b"].shape != (W.shape[0],):
                raise ContractError(f"layer {name} has inconsistent shape {W.shape}")
            width = W.shape[0]
        if width != 1:
            raise ContractError("output layer must produce one value per point")
        for name, arr in self.arrays.items():
            if not np.all(np.isfinite(arr)):
                raise ContractError(f"layer {name} has non-finite weights")

    @classmethod
    def init(cls, in_dim, k=10, edge_dims=(64, 64), global_dim=64, mlp_dims=(128, 64),
             seed=0):
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation."""
        rng = np.random.default_rng(seed)
        shapes = []
        c = in_dim
        for i, w in enumerate(edge_dims, start=1):
            shapes.append((f"ec{i}", (w, 2 * c)))
            c = w
        shapes.append(("glob", (global_dim, c)))
        width = c + global_dim
        for i, w in enumerate(tuple(mlp_dims) + (1,), start=1):
            name = "out" if i == len(mlp_dims) + 1 else f"mlp{i}"
            shapes.append((name, (w, width)))
            width = w
        arrays = {}
        for name, shape in shapes:
            s = 1.0 / np.sqrt(shape[1])
            arrays[name + ".W"] = rng.uniform(-s, s, size=shape)
            arrays[name + ".b"] = rng.uniform(-s, s, size=shape[0])
        return cls(arrays, k)

    @property
    def n_edge(self):
        return sum(1 for n in self.arrays if n.startswith("ec") and n.endswith(".W"))

    @property
    def mlp_names(self):
        names = [n[:-2] for n in self.arrays if n.startswith("mlp") and n.endswith(".W")]
        return names + ["out"]

    @property
    def in_dim(self):
        return self.arrays["ec1.W"].shape[1] // 2

    def manifest(self):
        return {"k": self.k,
                "layers": [[name, list(arr.shape)] for name, arr in self.arrays.items()]}

    def copy(self):
        return NetworkParams({n: a.copy() for n, a in self.arrays.items()}, self.k)

    def zeros_like(self):
        return {n: np.zeros_like(a) for n, a in self.arrays.items()}

    def __getitem__(self, name):
        return self.arrays[name]


def _pairwise_sq_dists(h):
    # einsum without BLAS: every pair uses the same summation order, so
    # distances (and hence neighbour ties) are exactly permutation-consistent
    sq = np.einsum("bnc,bnc->bn", h, h)
    gram = np.einsum("bnc,bmc->bnm", h, h)
    return sq[:, :, None] + sq[:, None, :] - 2.0 * gram


def _knn_batch(h, k):
    B, N, _ = h.shape
    if k >= N:
        raise ContractError(f"k={k} must be smaller than the number of points {N}")
    D = _pairwise_sq_dists(h)
    D[:, np.arange(N), np.arange(N)] = np.inf
    return np.argsort(D, axis=-1, kind="stable")[:, :, :k]


def knn_graph(features, k):
    """Indices of the k nearest other points (Euclidean), ties to the lower index."""
    features = np.asarray(features, dtype=float)
    return _knn_batch(features[None], k)[0]


def _mm(x, W):
    """x @ W.T over the last axis, as one 2-D matmul."""
    return (x.reshape(-1, x.shape[-1]) @ W.T).reshape(x.shape[:-1] + (W.shape[0],))


def _edgeconv(h, W, bias, idx, need_sel=False):
    B, N, C = h.shape
    Wa, Wb = W[:, :C], W[:, C:]
    # W [h_i ; h_j - h_i] = (Wa - Wb) h_i + Wb h_j, and leaky-ReLU is monotone,
    # so max_j act(.) = act(max_j .)
    Wd = Wa - Wb
    P = _mm(h, Wd) + bias
    Q = _mm(h, Wb)
    flat = idx + (np.arange(B) * N)[:, None, None]
    Qn = Q.reshape(B * N, -1)[flat]                      # (B, N, k, C')
    best = Qn.max(axis=2)
    z = P + best
    sel = None
    if need_sel:
        # first neighbour slot attaining the max, per channel
        slot = (Qn == best[:, :, None, :]).argmax(axis=2)
        sel = np.take_along_axis(idx, slot, axis=2)
    return lrelu(z), (h, Wd, Wb, z, sel)


def _edgeconv_backward(dout, cache, need_dh=True):
    h, Wd, Wb, z, sel = cache
    B, N, C = h.shape
    Cp = z.shape[-1]
    dz = dout * lrelu_grad(z)
    flat = ((np.arange(B)[:, None, None] * N + sel) * Cp + np.arange(Cp)).ravel()
    dQ = np.bincount(flat, weights=dz.ravel(), minlength=B * N * Cp).reshape(B, N, Cp)
    h2 = h.reshape(-1, C)
    gP = dz.reshape(-1, Cp).T @ h2
    gQ = dQ.reshape(-1, Cp).T @ h2
    dW = np.concatenate([gP, gQ - gP], axis=1)
    db = dz.sum(axis=(0, 1))
    dh = _mm(dz, Wd.T) + _mm(dQ, Wb.T) if need_dh else None
    return dW, db, dh


def edgeconv_forward(features, W, bias, k):
    """One EdgeConv layer on an (N, c) feature matrix."""
    h = np.asarray(features, dtype=float)[None]
    idx = _knn_batch(h, k)
    return _edgeconv(h, W, bias, idx)[0][0]


def forward_batch(X, params, keep_cache=False):
    """Per-point Q values for a batch of encoded states X of shape (B, N, F)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[2] != params.in_dim:
        raise ContractError(f"inputs of shape {X.shape} do not match in_dim={params.in_dim}")
    N = X.shape[1]
    if N < 2:
        raise ContractError("need at least two points")
    k = min(params.k, N - 1)
    h = X
    caches = []
    for i in range(1, params.n_edge + 1):
        idx = _knn_batch(h, k)
        h, c = _edgeconv(h, params[f"ec{i}.W"], params[f"ec{i}.b"], idx, keep_cache)
        caches.append(c)
    upre = _mm(h, params["glob.W"]) + params["glob.b"]
    u = lrelu(upre)
    gi = u.argmax(axis=1)                                # (B, G)
    g = np.take_along_axis(u, gi[:, None, :], axis=1)[:, 0, :]
    a = np.concatenate([h, np.broadcast_to(g[:, None, :], h.shape[:2] + g.shape[1:])], axis=2)
    mlp = []
    names = params.mlp_names
    for j, name in enumerate(names):
        zj = _mm(a, params[name + ".W"]) + params[name + ".b"]
        mlp.append((a, zj))
        a = lrelu(zj) if j < len(names) - 1 else zj
    q = a[:, :, 0]
    if not keep_cache:
        return q, None
    return q, {"edge": caches, "h": h, "upre": upre, "gi": gi, "mlp": mlp}


def backward_batch(dq, params, cache):
    """Gradients of sum(dq * q) w.r.t. every parameter (kNN graphs held fixed)."""
    grads = {}
    names = params.mlp_names
    da = np.asarray(dq, dtype=float)[:, :, None]
    for j in range(len(names) - 1, -1, -1):
        name = names[j]
        a_in, zj = cache["mlp"][j]
        dz = da if j == len(names) - 1 else da * lrelu_grad(zj)
        F = a_in.shape[-1]
        grads[name + ".W"] = dz.reshape(-1, dz.shape[-1]).T @ a_in.reshape(-1, F)
        grads[name + ".b"] = dz.sum(axis=(0, 1))
        da = _mm(dz, params[name + ".W"].T)
    h = cache["h"]
    C = h.shape[-1]
    dh = da[:, :, :C].copy()
    dg = da[:, :, C:].sum(axis=1)                        # (B, G)
    du = np.zeros_like(cache["upre"])
    np.put_along_axis(du, cache["gi"][:, None, :], dg[:, None, :], axis=1)
    dupre = du * lrelu_grad(cache["upre"])
    grads["glob.W"] = dupre.reshape(-1, dupre.shape[-1]).T @ h.reshape(-1, C)
    grads["glob.b"] = dupre.sum(axis=(0, 1))
    dh += _mm(dupre, params["glob.W"].T)
    for i in range(params.n_edge, 0, -1):
        dW, db, dh = _edgeconv_backward(dh, cache["edge"][i - 1], need_dh=i > 1)
        grads[f"ec{i}.W"] = dW
        grads[f"ec{i}.b"] = db
    return {name: grads[name] for name in params.arrays}


@dataclass(frozen=True, eq=False)
class QOutput:
    q: np.ndarray
    basis: np.ndarray

    @property
    def masked_q(self):
        """Q values of the basis points, aligned with ``basis``."""
        return self.q[self.basis]

    def greedy(self):
        """Basis point with the largest Q value, lowest index on ties."""
        m = self.masked_q
        return int(self.basis[m == m.max()].min())


def forward(encoding, params):
    q, _ = forward_batch(encoding.inputs[None], params)
    return QOutput(q[0], np.sort(np.asarray(encoding.basis, dtype=int)))


def backward(encoding, params, upstream):
    """Parameter gradients of sum(upstream * q) for a single state."""
    _, cache = forward_batch(encoding.inputs[None], params, keep_cache=True)
    return backward_batch(np.asarray(upstream, dtype=float)[None], params, cache)


def select_action(qout, eps, rng):
    """Epsilon-greedy choice over the basis."""
    if len(qout.basis) == 0:
        raise ContractError("no actions available")
    if rng.random() < eps:
        return int(qout.basis[int(rng.integers(len(qout.basis)))])
    return qout.greedy()
