"""
Autodiff Module - Diferenciación automática en modo inverso sobre tensores densos
Responsabilidad: Tensor float64, registro de cómputo (cinta), operaciones diferenciables
necesarias para el actor GNN, el crítico y las pérdidas PPO, y el optimizador Adam.
"""

import threading
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Formas incompatibles en una operación."""


class AutodiffError(RuntimeError):
    """Uso incorrecto del registro de cómputo (p.ej. backward sobre un tensor no registrado)."""


class Tensor:
    """
    Arreglo denso float64 con acumulador de gradiente opcional.

    Las hojas son parámetros (requires_grad=True) o constantes. Los tensores producidos
    dentro de un ComputationRecord activo guardan su posición en el registro.
    """

    __slots__ = ("value", "grad", "requires_grad", "name", "_record", "_index")

    def __init__(self, value, requires_grad: bool = False, name: Optional[str] = None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._record: Optional["ComputationRecord"] = None
        self._index: Optional[int] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"

    def __add__(self, other): return add(self, _lift(other))
    def __radd__(self, other): return add(_lift(other), self)
    def __sub__(self, other): return sub(self, _lift(other))
    def __rsub__(self, other): return sub(_lift(other), self)
    def __mul__(self, other): return mul(self, _lift(other))
    def __rmul__(self, other): return mul(_lift(other), self)
    def __neg__(self): return mul(self, constant(-1.0))
    def __matmul__(self, other): return matmul(self, other)


def parameter(value, name: Optional[str] = None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


@dataclass
class RecordEntry:
    kind: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


_active = threading.local()


class ComputationRecord:
    """
    Registro de cómputo (cinta) de solo-anexado, ordenado topológicamente.

    Uso:
        with ComputationRecord():
            loss = ...
        backward(loss)

    Fuera de un registro activo las operaciones sólo calculan valores.
    El registro pertenece a un único hilo.
    """

    def __init__(self):
        self.entries: List[RecordEntry] = []

    def __enter__(self) -> "ComputationRecord":
        stack = getattr(_active, "stack", None)
        if stack is None:
            stack = _active.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _active.stack.pop()
        return False

    def append(self, kind: str, inputs: Tuple[Tensor, ...], output: Tensor,
               backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> None:
        output.requires_grad = True
        output._record = self
        output._index = len(self.entries)
        self.entries.append(RecordEntry(kind, inputs, output, backward_fn))


def _current_record() -> Optional[ComputationRecord]:
    stack = getattr(_active, "stack", None)
    return stack[-1] if stack else None


def _emit(kind: str, inputs: Tuple[Tensor, ...], value: np.ndarray,
          backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    out = Tensor(value)
    record = _current_record()
    if record is not None and any(t.requires_grad for t in inputs):
        record.append(kind, inputs, out, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Reduce un gradiente difundido a la forma original del operando."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, kind: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: formas incompatibles {a.shape} y {b.shape}")


# ---------------------------------------------------------------------------
# Operaciones
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "add")
    return _emit("add", (a, b), a.value + b.value,
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "sub")
    return _emit("sub", (a, b), a.value - b.value,
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "mul")
    av, bv = a.value, b.value
    return _emit("mul", (a, b), av * bv,
                 lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: formas incompatibles {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return _emit("matmul", (a, b), av @ bv, lambda g: (g @ bv.T, av.T @ g))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: {e}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _emit("concat", tensors, value, lambda g: tuple(np.split(g, splits, axis=axis)))


def relu(x: Tensor) -> Tensor:
    active = x.value > 0
    return _emit("relu", (x,), np.where(active, x.value, 0.0), lambda g: (g * active,))


def exp(x: Tensor) -> Tensor:
    value = np.exp(x.value)
    return _emit("exp", (x,), value, lambda g: (g * value,))


def minimum(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "minimum")
    pick_a = a.value <= b.value
    return _emit("minimum", (a, b), np.minimum(a.value, b.value),
                 lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)))


def clip(x: Tensor, low: float, high: float) -> Tensor:
    inside = (x.value >= low) & (x.value <= high)
    return _emit("clip", (x,), np.clip(x.value, low, high), lambda g: (g * inside,))


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    original = x.shape
    try:
        value = x.value.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: {e}")
    return _emit("reshape", (x,), value, lambda g: (g.reshape(original),))


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _emit("sum", (x,), np.asarray(x.value.sum()), lambda g: (np.full(shape, float(g)),))


def mean_all(x: Tensor) -> Tensor:
    shape, n = x.shape, max(x.value.size, 1)
    return _emit("mean", (x,), np.asarray(x.value.mean() if x.value.size else 0.0),
                 lambda g: (np.full(shape, float(g) / n),))


def sum_rows(x: Tensor) -> Tensor:
    """Suma sobre filas: (n, d) -> (1, d)."""
    if x.value.ndim != 2:
        raise ShapeError(f"sum_rows: se esperaba una matriz, forma {x.shape}")
    n = x.shape[0]
    return _emit("sum_rows", (x,), x.value.sum(axis=0, keepdims=True),
                 lambda g: (np.repeat(g, n, axis=0),))


def mean_rows(x: Tensor) -> Tensor:
    """Media sobre filas: (n, d) -> (1, d); una matriz sin filas produce ceros."""
    if x.value.ndim != 2:
        raise ShapeError(f"mean_rows: se esperaba una matriz, forma {x.shape}")
    n = x.shape[0]
    if n == 0:
        return _emit("mean_rows", (x,), np.zeros((1, x.shape[1])), lambda g: (np.zeros(x.shape),))
    return _emit("mean_rows", (x,), x.value.mean(axis=0, keepdims=True),
                 lambda g: (np.repeat(g / n, n, axis=0),))


def l2_normalize_rows(x: Tensor) -> Tensor:
    """Normaliza cada fila a norma L2 unitaria; las filas nulas quedan nulas."""
    if x.value.ndim != 2:
        raise ShapeError(f"l2_normalize_rows: se esperaba una matriz, forma {x.shape}")
    norms = np.linalg.norm(x.value, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    y = np.where(norms > 0, x.value / safe, 0.0)

    def backward_fn(g):
        dot = np.sum(y * g, axis=1, keepdims=True)
        return (np.where(norms > 0, (g - y * dot) / safe, 0.0),)

    return _emit("l2_normalize_rows", (x,), y, backward_fn)


def gather_rows(x: Tensor, indices: Sequence[int]) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    if x.value.ndim != 2:
        raise ShapeError(f"gather_rows: se esperaba una matriz, forma {x.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError(f"gather_rows: índice fuera de rango para {x.shape[0]} filas")

    def backward_fn(g):
        out = np.zeros(x.shape)
        np.add.at(out, idx, g)
        return (out,)

    return _emit("gather_rows", (x,), x.value[idx], backward_fn)


def segment_mean(x: Tensor, segment_ids: Sequence[int], num_segments: int) -> Tensor:
    """
    Media de filas agrupadas por segmento: (E, d) -> (num_segments, d).

    Un segmento vacío produce la fila nula.
    """
    ids = np.asarray(segment_ids, dtype=np.int64)
    if x.value.ndim != 2 or ids.shape[0] != x.shape[0]:
        raise ShapeError(f"segment_mean: {x.shape} con {ids.shape[0]} ids de segmento")
    counts = np.bincount(ids, minlength=num_segments).astype(DTYPE) if ids.size else np.zeros(num_segments)
    safe = np.where(counts > 0, counts, 1.0)[:, None]
    total = np.zeros((num_segments, x.shape[1]))
    if ids.size:
        np.add.at(total, ids, x.value)
    return _emit("segment_mean", (x,), total / safe, lambda g: ((g / safe)[ids],))


def take_along_rows(x: Tensor, indices: Sequence[int]) -> Tensor:
    """Elemento x[i, indices[i]] por fila: (n, k) -> (n,)."""
    idx = np.asarray(indices, dtype=np.int64)
    rows = np.arange(x.shape[0])
    if idx.shape[0] != x.shape[0]:
        raise ShapeError(f"take_along_rows: {x.shape[0]} filas y {idx.shape[0]} índices")

    def backward_fn(g):
        out = np.zeros(x.shape)
        out[rows, idx] = g
        return (out,)

    return _emit("take_along_rows", (x,), x.value[rows, idx], backward_fn)


def masked_log_softmax(x: Tensor, mask) -> Tensor:
    """
    Log-softmax por fila restringido a las entradas de la máscara.

    Las entradas enmascaradas valen -inf (probabilidad 0) y reciben gradiente 0.

    Raises:
        ValueError: si alguna fila tiene la máscara completamente en False
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ShapeError(f"masked_log_softmax: máscara {mask.shape} para logits {x.shape}")
    if not mask.any(axis=-1).all():
        raise ValueError("masked_log_softmax: fila con todas las acciones enmascaradas")
    logits = np.where(mask, x.value, -np.inf)
    top = logits.max(axis=-1, keepdims=True)
    shifted = np.where(mask, x.value - top, -np.inf)
    log_norm = np.log(np.sum(np.where(mask, np.exp(shifted), 0.0), axis=-1, keepdims=True))
    logp = np.where(mask, shifted - log_norm, -np.inf)
    probs = np.where(mask, np.exp(np.where(mask, logp, 0.0)), 0.0)

    def backward_fn(g):
        g = np.where(mask, g, 0.0)
        return (np.where(mask, g - probs * g.sum(axis=-1, keepdims=True), 0.0),)

    return _emit("masked_log_softmax", (x,), logp, backward_fn)


def masked_entropy(logp: Tensor, mask) -> Tensor:
    """Entropía por fila -sum p log p sobre las entradas de la máscara: (n, k) -> (n,)."""
    mask = np.asarray(mask, dtype=bool)
    safe_logp = np.where(mask, logp.value, 0.0)
    p = np.where(mask, np.exp(safe_logp), 0.0)
    value = -np.sum(p * safe_logp, axis=-1)
    return _emit("masked_entropy", (logp,), value,
                 lambda g: (np.where(mask, -g[..., None] * p * (safe_logp + 1.0), 0.0),))


# ---------------------------------------------------------------------------
# Retropropagación y optimización
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """
    Propaga d(loss)/d(param) hacia todos los parámetros alcanzables.

    Los gradientes de los parámetros se acumulan entre llamadas (usar zero_grad).

    Raises:
        AutodiffError: si `loss` no es escalar o no fue registrado
    """
    if loss.value.size != 1:
        raise AutodiffError(f"backward requiere un escalar, forma {loss.shape}")
    record = loss._record
    if record is None:
        raise AutodiffError("backward sobre un tensor que no pertenece a ningún registro de cómputo")

    entries = record.entries[: loss._index + 1]
    for entry in entries:
        entry.output.grad = None
    loss.grad = np.ones(loss.shape)

    for entry in reversed(entries):
        grad = entry.output.grad
        if grad is None:
            continue
        for tensor, g in zip(entry.inputs, entry.backward(grad)):
            if g is None or not tensor.requires_grad:
                continue
            g = np.asarray(g, dtype=DTYPE).reshape(tensor.shape)
            tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def global_grad_norm(params: Iterable[Tensor]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Escala los gradientes si su norma global excede `max_norm`; devuelve la norma original."""
    norm = global_grad_norm(params)
    if norm > max_norm > 0:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


class Adam:
    """
    Optimizador Adam con estado por parámetro (momentos inicializados en cero).

    Determinista: dos ejecuciones con los mismos gradientes producen trayectorias idénticas.
    """

    def __init__(self, params: Sequence[Tensor], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Dict[int, np.ndarray] = {id(p): np.zeros(p.shape) for p in self.params}
        self.v: Dict[int, np.ndarray] = {id(p): np.zeros(p.shape) for p in self.params}

    def step(self) -> None:
        self.t += 1
        for p in self.params:
            grad = p.grad if p.grad is not None else np.zeros(p.shape)
            adam_step(p, grad, self.m[id(p)], self.v[id(p)], self.t,
                      self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        zero_grad(self.params)


def adam_step(param: Tensor, grad: np.ndarray, m: np.ndarray, v: np.ndarray, t: int,
              lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """Actualización Adam estándar in situ (m y v se modifican en el lugar)."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param.value = param.value - lr * m_hat / (np.sqrt(v_hat) + eps)
