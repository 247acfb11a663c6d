"""One-class signed-distance-function learning with 1-Lipschitz networks."""

__version__ = "0.1.0"
