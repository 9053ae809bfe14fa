"""rxncond: reaction-condition reasoning with falsifiable rationale certificates."""

__version__ = "0.1.0"
