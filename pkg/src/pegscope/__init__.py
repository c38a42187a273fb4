"""pegscope: align stablecoin market data with issuer reserve attestations."""

__version__ = "0.1.0"
