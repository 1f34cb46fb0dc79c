"""Zero-shot context-aided forecasting with chat LLMs: prompting strategies,
RCRPS scoring and difficulty-based routing."""

__version__ = "0.1.0"
