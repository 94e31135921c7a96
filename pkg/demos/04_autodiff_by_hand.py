"""The tensor engine under the model: a tape, a backward pass and a finite-difference check.

Run:  python3 demos/04_autodiff_by_hand.py
"""
import numpy as np

from autosign import tensor as tn
from autosign.tensor import Tensor

rng = np.random.default_rng(0)

# Two strided convolutions turn 1000 frames into 250 steps.
x = Tensor(rng.normal(size=(1, 6, 1000)), requires_grad=True)
w1 = Tensor(rng.normal(size=(8, 6, 3)) * 0.1, requires_grad=True)
w2 = Tensor(rng.normal(size=(8, 8, 3)) * 0.1, requires_grad=True)
h = tn.gelu(tn.conv1d(x, w1, None, stride=2, padding=1))
h = tn.gelu(tn.conv1d(h, w2, None, stride=2, padding=1))
print("compressed shape:", h.shape)

loss = tn.mean(h * h)
loss.backward()

# Compare one weight's gradient against central differences.
idx = (3, 2, 1)
eps = 1e-5


def f():
    with tn.no_grad():
        a = tn.gelu(tn.conv1d(x, w1, None, stride=2, padding=1))
        a = tn.gelu(tn.conv1d(a, w2, None, stride=2, padding=1))
        return tn.mean(a * a).item()


orig = w1.data[idx]
w1.data[idx] = orig + eps
up = f()
w1.data[idx] = orig - eps
down = f()
w1.data[idx] = orig
print(f"analytic {w1.grad[idx]:.10f}  numeric {(up - down) / (2 * eps):.10f}")
