"""Define the configurable parameters for a verification run."""

import os
from dataclasses import dataclass, fields
from typing import Any, Optional

from langchain_core.runnables import RunnableConfig


@dataclass(kw_only=True)
class Configuration:
    """Run-scoped knobs of the verification workflow."""

    tolerance_scale: float = 1.0
    refinement_levels: int = 1
    tolerance: Optional[float] = None

    @classmethod
    def from_runnable_config(cls, config: Optional[RunnableConfig] = None) -> "Configuration":
        """Creates a Configuration instance from a RunnableConfig."""
        configurable = config["configurable"] if config and "configurable" in config else {}
        values: dict[str, Any] = {
            f.name: os.environ.get(f"WILLMORE_{f.name.upper()}", configurable.get(f.name))
            for f in fields(cls)
            if f.init
        }
        converted = {}
        for f in fields(cls):
            value = values.get(f.name)
            if value is None or value == "":
                continue
            # environment values arrive as strings
            converted[f.name] = int(value) if f.name == "refinement_levels" else float(value)
        return cls(**converted)

    def judged_tolerance(self, default: float) -> float:
        # exact checks (tolerance 0) stay exact
        if default == 0:
            return 0.0
        base = self.tolerance if self.tolerance is not None else default
        return base * self.tolerance_scale
