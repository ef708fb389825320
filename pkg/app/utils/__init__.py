from .reduction import map_blocks, pairwise_sum

__all__ = ["pairwise_sum", "map_blocks"]
