"""Throwaway prototype: MFNO training on sde1, fast tier, hand-rolled ops."""
import numpy as np
import scipy.fft
from scipy.special import ndtr
import time

SQRT_2PI = np.sqrt(2 * np.pi)

# ---- minimal tape ----
class Tape:
    def __init__(self):
        self.nodes = []
        self.grads = {}

class Node:
    __slots__ = ("val", "adj", "back", "tape")
    def __init__(self, tape, val, back=None):
        self.val = val; self.adj = None; self.back = back; self.tape = tape
        tape.nodes.append(self)

def leaf(tape, val, name=None):
    n = Node(tape, val)
    if name:
        def back(adj, name=name, tape=tape):
            if name in tape.grads: tape.grads[name] += adj
            else: tape.grads[name] = adj
        n.back = ("leaf", back)
    return n

def seed_adj(n, s):
    if n.adj is None: n.adj = s
    else: n.adj = n.adj + s

def backward(tape, root):
    root.adj = np.ones_like(root.val)
    for n in reversed(tape.nodes):
        if n.adj is None or n.back is None: continue
        kind, fn = n.back
        fn(n.adj)
    return tape.grads

def affine(tape, x, Wn, bn):
    W, b = Wn.val, bn.val
    out = np.tensordot(W, x.val, axes=(1, 1)).transpose(1, 0, 2)
    o = Node(tape, out)
    def back(adj):
        seed_adj(Wn, np.tensordot(adj, x.val, axes=((0, 2), (0, 2))))
        seed_adj(bn, adj.sum(axis=(0, 2)))
        seed_adj(x, np.tensordot(W.T, adj, axes=(1, 1)).transpose(1, 0, 2))
    o.back = ("affine", back)
    return o

def gelu(tape, x):
    v = x.val
    cdf = ndtr(v)
    o = Node(tape, v * cdf)
    def back(adj):
        pdf = np.exp(-0.5 * v * v) / SQRT_2PI
        seed_adj(x, adj * (cdf + v * pdf))
    o.back = ("gelu", back)
    return o

def rfft(tape, x):
    g = x.val.shape[-1]
    o = Node(tape, scipy.fft.rfft(x.val, axis=-1))
    def back(adj):
        m = adj.shape[-1]
        nyq = m - 1 if g % 2 == 0 else m
        a = adj.copy(); a[..., 1:nyq] *= 0.5
        seed_adj(x, scipy.fft.irfft(a, n=g, axis=-1) * g)
    o.back = ("rfft", back)
    return o

def irfft(tape, X, g):
    o = Node(tape, scipy.fft.irfft(X.val, n=g, axis=-1))
    def back(adj):
        S = scipy.fft.rfft(adj, axis=-1) / g
        m = S.shape[-1]
        nyq = m - 1 if g % 2 == 0 else m
        S[..., 1:nyq] *= 2.0
        seed_adj(X, S)
    o.back = ("irfft", back)
    return o

def mode_mul(tape, X, Pn, K):
    P = Pn.val
    m = X.val.shape[-1]
    Xk = np.ascontiguousarray(X.val[:, :, :K].transpose(2, 1, 0))  # (K,C,B)
    out = np.zeros(X.val.shape, dtype=complex)
    out[:, :, :K] = np.matmul(P, Xk).transpose(2, 1, 0)
    o = Node(tape, out)
    def back(adj):
        Ak = np.ascontiguousarray(adj[:, :, :K].transpose(2, 1, 0))  # (K,C,B)
        gX = np.zeros_like(X.val)
        gX[:, :, :K] = np.matmul(np.conj(P).transpose(0, 2, 1), Ak).transpose(2, 1, 0)
        seed_adj(X, gX)
        seed_adj(Pn, np.matmul(Ak, np.conj(Xk).transpose(0, 2, 1)))
    o.back = ("modemul", back)
    return o

def add(tape, a, b):
    o = Node(tape, a.val + b.val)
    def back(adj):
        seed_adj(a, adj); seed_adj(b, adj)
    o.back = ("add", back)
    return o

def mse(tape, pred, target, denom):
    d = pred.val - target
    o = Node(tape, np.array(np.sum(d * d) / denom))
    def back(adj):
        seed_adj(pred, (2.0 / denom) * d * adj)
    o.back = ("mse", back)
    return o

# ---- MFNO ----
def init_params(rng, L=5, dv=32, da=2, K=64, hidden=128, du=1):
    p = {}
    s = np.sqrt(1.0 / da)
    p["lift.w"] = rng.uniform(-s, s, (dv, da)); p["lift.b"] = rng.uniform(-s, s, dv)
    for l in range(L):
        sc = 1.0 / np.sqrt(dv * K)
        p[f"l{l}.P"] = (rng.uniform(-1, 1, (K, dv, dv)) + 1j * rng.uniform(-1, 1, (K, dv, dv))) * sc
        s = np.sqrt(1.0 / dv)
        p[f"l{l}.w"] = rng.uniform(-s, s, (dv, dv)); p[f"l{l}.b"] = rng.uniform(-s, s, dv)
    s = np.sqrt(1.0 / dv)
    p["p1.w"] = rng.uniform(-s, s, (hidden, dv)); p["p1.b"] = rng.uniform(-s, s, hidden)
    s = np.sqrt(1.0 / hidden)
    p["p2.w"] = rng.uniform(-s, s, (du, hidden)); p["p2.b"] = rng.uniform(-s, s, du)
    return p

def mirror_pad_vals(x):
    return np.concatenate([x, x[..., -2:0:-1]], axis=-1)

def forward(tape, params, xv, L=5, K=64, padding="mirror"):
    r = xv.shape[-1]
    if padding == "mirror":
        xv = mirror_pad_vals(xv)
    elif padding == "zero":
        xv = np.concatenate([xv, np.zeros(xv.shape[:-1] + (r - 2,))], axis=-1)
    g = xv.shape[-1]
    nodes = {k: leaf(tape, v, k) for k, v in params.items()}
    x = leaf(tape, xv)
    v = affine(tape, x, nodes["lift.w"], nodes["lift.b"])
    for l in range(L):
        spec = rfft(tape, v)
        spec = mode_mul(tape, spec, nodes[f"l{l}.P"], K)
        conv = irfft(tape, spec, g)
        lin = affine(tape, v, nodes[f"l{l}.w"], nodes[f"l{l}.b"])
        v = gelu(tape, add(tape, lin, conv))
    v = gelu(tape, affine(tape, v, nodes["p1.w"], nodes["p1.b"]))
    v = affine(tape, v, nodes["p2.w"], nodes["p2.b"])
    # truncate
    o = Node(tape, v.val[..., :r])
    def back(adj, v=v, g=g, r=r):
        gr = np.zeros(adj.shape[:-1] + (g,))
        gr[..., :r] = adj
        seed_adj(v, gr)
    o.back = ("trunc", back)
    return o

# ---- Adam (decoupled wd) ----
class Adam:
    def __init__(self, params, lr, wd, b1=0.9, b2=0.999, eps=1e-8):
        self.p = params; self.lr = lr; self.wd = wd; self.b1 = b1; self.b2 = b2; self.eps = eps
        self.m = {k: np.zeros(v.size * (2 if np.iscomplexobj(v) else 1)) for k, v in params.items()}
        self.v = {k: np.zeros_like(m) for k, m in self.m.items()}
        self.t = 0
    def step(self, grads, lr):
        self.t += 1
        b1, b2 = self.b1, self.b2
        for k, th in self.p.items():
            g = grads[k]
            gr = g.ravel().view(np.float64) if np.iscomplexobj(g) else g.ravel()
            thr = th.ravel().view(np.float64) if np.iscomplexobj(th) else th.ravel()
            m = self.m[k]; v = self.v[k]
            m *= b1; m += (1 - b1) * gr
            v *= b2; v += (1 - b2) * gr * gr
            mh = m / (1 - b1 ** self.t); vh = v / (1 - b2 ** self.t)
            thr -= lr * mh / (np.sqrt(vh) + self.eps) + lr * self.wd * thr

# ---- SDE1 dataset ----
def euler_sde1(xis, dB, dt, alpha=0.1, beta=0.03, sigma=2.0):
    n, steps = dB.shape
    X = np.empty((n, steps + 1)); X[:, 0] = xis
    S = np.zeros(n)
    for j in range(steps):
        S += X[:, j] * dt
        X[:, j + 1] = X[:, j] + (alpha + beta * S) * dt + sigma * dB[:, j]
    return X

def build_sde1(seed, N, r=128, T=12.8, fine=32):
    rng = np.random.default_rng(seed)
    dt = T / (r - 1); dtf = dt / fine
    steps = (r - 1) * fine
    xis = rng.uniform(0, 20, N)
    dB = rng.standard_normal((N, steps)) * np.sqrt(dtf)
    Xf = euler_sde1(xis, dB, dtf)
    Bf = np.concatenate([np.zeros((N, 1)), np.cumsum(dB, axis=1)], axis=1)
    B = Bf[:, ::fine]; X = Xf[:, ::fine]
    inp = np.stack([np.broadcast_to(xis[:, None], (N, r)), B], axis=1)  # (N,2,r)
    tgt = X[:, None, :]
    return inp, tgt

def rel_l2(pred, tgt):
    e = np.linalg.norm(pred - tgt, axis=-1) / np.linalg.norm(tgt, axis=-1)
    return float(np.mean(e))

def run(normalize, N=256, epochs=100, lr0=5e-4, log=25):
    rng = np.random.default_rng(0)
    Xtr, Ytr = build_sde1(1, N)
    Xte, Yte = build_sde1(99, 128)
    if normalize:
        im = Xtr.mean(axis=(0, 2), keepdims=True); isd = Xtr.std(axis=(0, 2), keepdims=True)
        om = Ytr.mean(); osd = Ytr.std()
    else:
        im = 0; isd = 1.0; om = 0.0; osd = 1.0
    Xn = (Xtr - im) / isd; Yn = (Ytr - om) / osd
    params = init_params(rng)
    opt = Adam(params, lr0, 3e-3)
    t0 = time.time()
    idx = np.arange(N)
    r = Xtr.shape[-1]
    shuffle_rng = np.random.default_rng(123)
    for ep in range(epochs):
        lr = lr0 * 0.9 ** (ep // 100)
        shuffle_rng.shuffle(idx)
        tot = 0.0
        for s in range(0, N, 32):
            b = idx[s:s + 32]
            tape = Tape()
            out = forward(tape, params, Xn[b])
            loss = mse(tape, out, Yn[b], len(b) * (r - 1))
            grads = backward(tape, loss)
            opt.step(grads, lr)
            tot += float(loss.val)
        if ep % log == 0 or ep == epochs - 1:
            # test eval
            tape = Tape()
            pred = forward(tape, params, (Xte - im) / isd).val * osd + om
            print(f"  ep {ep:3d} loss {tot / (N // 32):.3e} test rel_l2 {rel_l2(pred[:, 0], Yte[:, 0]):.3e}  ({time.time()-t0:.0f}s)")
    return params

print("== normalized ==")
run(True)
