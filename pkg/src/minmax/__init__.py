"""Min-max optimization over multiple domains for robust attacks and adversarial training."""

__version__ = "0.1.0"
