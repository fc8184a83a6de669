"""FastAPI service wrapping the correction engine."""
