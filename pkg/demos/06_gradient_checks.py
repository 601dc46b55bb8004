# Finite-difference checks of the hand-written reverse mode: single layers,
# then the full D + C + G objective on a tiny instance.
import numpy as np

from ibgan import ndcore as nd
from ibgan.checks import gradient_checks

tape = nd.Tape()
rng = np.random.default_rng(0)
x = rng.standard_normal((2, 3, 9))
K = tape.param("K", rng.standard_normal((4, 3, 3)))
b = tape.param("b", np.zeros(4))
h = nd.leaky_relu(nd.conv1d_forward(x, K, b, stride=2, padding=1))
loss = nd.sum_all(h * h)
grads = nd.backward(tape, loss)
print("dL/dK shape:", grads["K"].shape)
print("max rel error:", nd.grad_check(tape, loss))

for result in gradient_checks():
    print(result.line())
