"""Fit a small MLP to a 1-D curve with the tape autodiff and Adam.

    python3 demos/01_autodiff_fit.py
"""
import numpy as np

from coalesce.autodiff import MLP, Adam, Tensor, reduce_mean, square

rng = np.random.default_rng(0)
x = np.linspace(-1, 1, 128).reshape(-1, 1)
y = np.sin(3 * x)

net = MLP([1, 32, 32, 1], rng, activation="leaky_relu")
opt = Adam(net.parameters(), lr=1e-2)
for step in range(1500):
    opt.zero_grad()
    loss = reduce_mean(square(net(Tensor(x)) - Tensor(y)))
    loss.backward()
    opt.step()
    if step % 300 == 0:
        print(f"step {step:4d}  mse {loss.item():.5f}")
print(f"final mse {loss.item():.5f}")
