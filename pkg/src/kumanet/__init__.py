"""Single-hidden-layer networks with Kumaraswamy, sigmoid, ReLU and Noisy ReLU units."""

__version__ = "0.1.0"
