"""Components that tie the bondsat library together into runnable pipelines."""

from .optimizer import CircuitOptimizer, OptimizationResult, run

__all__ = ["CircuitOptimizer", "OptimizationResult", "run"]
