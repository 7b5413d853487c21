"""
Reverse-mode gradients on numpy arrays
======================================

Build a tiny computation, run backward, and confirm the result with
central differences.
"""

import numpy as np

from tapa import tensor as T
from tapa.tensor import Tensor

print("== 1. a two-layer expression ==")
rng = np.random.default_rng(0)
x = Tensor(rng.normal(size=(3, 4)))
w = Tensor(rng.normal(size=(4, 2)), requires_grad=True, name="w")
b = Tensor(np.zeros(2), requires_grad=True, name="b")

logits = T.add(T.matmul(T.tanh(x), w), b)
loss = T.softmax_crossentropy(logits, [0, 1, 1])
print("   loss:", round(loss.item(), 6))

T.backward(loss)
print("   dloss/db:", b.grad)

print("== 2. a finite-difference check ==")
report = T.grad_check(lambda: T.softmax_crossentropy(T.add(T.matmul(T.tanh(x), w), b), [0, 1, 1]),
                      {"w": w, "b": b})
print("   max relative error: %.2e (worst: %s)" % (report.max_relative_error, report.worst_parameter))

print("== 3. convolution and pooling ==")
image = Tensor(np.arange(16.0).reshape(1, 4, 4))
kernel = Tensor(np.ones((1, 1, 2, 2)))
conv = T.conv2d(image, kernel)
print("   conv output:\n", conv.data[0])
print("   2x2 max pool:\n", T.maxpool2d(conv, 2).data[0])
