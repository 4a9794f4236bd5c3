"""Graph features and federated training for cross-bank AML detection on generated data."""

__version__ = "0.1.0"
