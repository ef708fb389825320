from .spaceform import AmbientPoint, AmbientVector, RadialWeights, SpaceForm, hyperbolic, sphere

__all__ = ["SpaceForm", "AmbientPoint", "AmbientVector", "RadialWeights", "hyperbolic", "sphere"]
