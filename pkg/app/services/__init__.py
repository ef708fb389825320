from .surfaces import base_point_of, build_surface, reference_values

__all__ = ["build_surface", "reference_values", "base_point_of"]
