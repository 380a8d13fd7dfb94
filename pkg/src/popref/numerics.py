"""Dense vector/matrix helpers, network nonlinearities, seeded randomness,
and a finite-difference gradient oracle.

Matrices are plain 2-D float64 numpy arrays in C (row-major) order; vectors
are 1-D float64 arrays.  Everything here is a pure function except
:class:`Rng`, which is single-owner mutable state.

Randomness
----------
:class:`Rng` is a self-contained deterministic generator so that datasets,
parameter draws, and shuffles reproduce bit-for-bit across platforms and
library versions:

* state seeding: four outputs of the splitmix64 sequence over the user seed;
* stream: xoshiro256** (Blackman & Vigna 2018), 64-bit outputs;
* floats: the 53 high bits of one output, scaled into [0, 1);
* bounded integers: rejection sampling, so there is no modulo bias;
* normal deviates: Box-Muller transform with the spare value cached.

Two generators built from equal seeds produce equal output streams.  An
``Rng`` must never be shared across concurrent tasks; derive children with
:meth:`Rng.fork` or :func:`derive_seed` instead.
"""

import math

import numpy as np

from .errors import ContractViolation

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One step of the splitmix64 sequence: returns (output, next_state)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31), state


def _scramble64(x: int) -> int:
    out, _ = splitmix64(x & _MASK64)
    return out


def fnv1a64(text: str) -> int:
    """FNV-1a hash of the UTF-8 bytes; stable across runs and platforms."""
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


def derive_seed(master: int, *parts: int | str) -> int:
    """Deterministic child seed from a master seed plus labels/indices.

    Gives every split and every generated record its own stream, so any
    sub-range of a dataset can be regenerated independently of the rest.
    """
    h = _scramble64(master)
    for part in parts:
        key = fnv1a64(part) if isinstance(part, str) else int(part) & _MASK64
        h = _scramble64(h ^ key)
    return h


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """Seeded xoshiro256** stream with float, integer, and normal draws."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        state = []
        s = self.seed
        for _ in range(4):
            out, s = splitmix64(s)
            state.append(out)
        # splitmix64 is a bijection per step, so the state is never all-zero
        self._s = state
        self._gauss_spare = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection."""
        if n <= 0:
            raise ContractViolation(f"randrange bound must be positive, got {n}")
        threshold = (1 << 64) % n
        while True:
            r = self.next_u64()
            if r >= threshold:
                return r % n

    def choice(self, seq):
        if len(seq) == 0:
            raise ContractViolation("choice from an empty sequence")
        return seq[self.randrange(len(seq))]

    def sample(self, seq, k: int) -> list:
        """k distinct elements, drawn without replacement."""
        xs = list(seq)
        if k > len(xs):
            raise ContractViolation(f"cannot sample {k} from {len(xs)} elements")
        for i in range(k):
            j = i + self.randrange(len(xs) - i)
            xs[i], xs[j] = xs[j], xs[i]
        return xs[:k]

    def shuffle(self, xs: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(xs) - 1, 0, -1):
            j = self.randrange(i + 1)
            xs[i], xs[j] = xs[j], xs[i]

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        if self._gauss_spare is not None:
            z = self._gauss_spare
            self._gauss_spare = None
        else:
            u1 = 1.0 - self.random()  # in (0, 1], keeps log() finite
            u2 = self.random()
            r = math.sqrt(-2.0 * math.log(u1))
            z = r * math.cos(2.0 * math.pi * u2)
            self._gauss_spare = r * math.sin(2.0 * math.pi * u2)
        return mu + sigma * z

    def normals(self, n: int, mu: float = 0.0, sigma: float = 1.0) -> np.ndarray:
        return np.array([self.normal(mu, sigma) for _ in range(n)], dtype=np.float64)

    def fork(self) -> "Rng":
        """Child generator seeded from this stream."""
        return Rng(self.next_u64())


def glorot_uniform(rng: Rng, rows: int, cols: int) -> np.ndarray:
    """Matrix with entries uniform in (-a, a), a = sqrt(6 / (rows + cols))."""
    bound = math.sqrt(6.0 / (rows + cols))
    flat = np.array([rng.uniform(-bound, bound) for _ in range(rows * cols)])
    return flat.reshape(rows, cols)


def as_vector(v) -> np.ndarray:
    out = np.asarray(v, dtype=np.float64)
    if out.ndim != 1:
        raise ContractViolation(f"expected a 1-D vector, got shape {out.shape}")
    return out


def matvec(m, v) -> np.ndarray:
    """Standard matrix-vector product with an explicit shape contract."""
    m = np.asarray(m, dtype=np.float64)
    v = as_vector(v)
    if m.ndim != 2:
        raise ContractViolation(f"expected a 2-D matrix, got shape {m.shape}")
    if m.shape[1] != v.shape[0]:
        raise ContractViolation(
            f"matvec shape mismatch: {m.shape[0]}x{m.shape[1]} @ {v.shape[0]}"
        )
    return m @ v


def relu(v):
    """Elementwise max(0, x); sharpens similarity profiles by zeroing low values."""
    return np.maximum(np.asarray(v, dtype=np.float64), 0.0)


def sigmoid(x):
    """Numerically stable logistic function; scalar in, scalar out (or elementwise)."""
    arr = np.asarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    if arr.ndim == 0:
        return float(out)
    return out


def softmax(v) -> np.ndarray:
    """Exp-normalized distribution, computed with max-subtraction for stability."""
    v = as_vector(v)
    if v.size == 0:
        raise ContractViolation("softmax of an empty vector")
    shifted = v - np.max(v)
    e = np.exp(shifted)
    return e / e.sum()


def logsumexp(v) -> float:
    v = as_vector(v)
    if v.size == 0:
        raise ContractViolation("logsumexp of an empty vector")
    m = float(np.max(v))
    return m + math.log(float(np.exp(v - m).sum()))


def finite_diff_grad(f, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time.

    Serves as the independent oracle against which hand-derived gradients
    are checked; it never shares code with the analytic paths it verifies.
    """
    x = as_vector(x).copy()
    grad = np.zeros_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + h
        hi = f(x)
        x[i] = orig - h
        lo = f(x)
        x[i] = orig
        grad[i] = (hi - lo) / (2.0 * h)
    return grad


def rel_error(a, b) -> float:
    """max |a - b| / max(1, |a|, |b|), the gradient-check error metric."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
