import logging
import time
from typing import Annotated, Any, Dict, List, Optional, Sequence

from langchain_core.runnables import RunnableConfig
from langgraph.graph import StateGraph
from langgraph.graph.state import END

from ..exceptions import WillmoreError
from ..services.surfaces import base_point_of, build_surface
from .configuration import Configuration
from .corpus import VerificationItem, select

logger = logging.getLogger(__name__)

"""
VerificationWorkflow: A class that encapsulates the LangGraph workflow for one corpus item.
Attributes:
    graph (Graph): The compiled LangGraph workflow.
Methods:
    _build_graph(self) -> Graph: Build the LangGraph workflow.
    _build_surface(self, state, config) -> Dict[str, Any]: Build the item's surface and base point.
    _evaluate(self, state, config) -> Dict[str, Any]: Evaluate the item's functional.
    _refine(self, state, config) -> Dict[str, Any]: Double the base resolution of the surface.
    _judge(self, state, config) -> Dict[str, Any]: Decide PASS/FAIL for the final report.
    _should_refine(self, state) -> bool: Determine if a failed evaluation is retried finer.
    run(self, item, config) -> Dict[str, Any]: Run the workflow for one item.
    run_all(self, names, config) -> List[Dict[str, Any]]: Run the workflow over corpus items.
"""


class VerificationWorkflow:
    def __init__(self):
        self.graph = self._build_graph()

    def _build_graph(self) -> StateGraph:
        """Build the LangGraph workflow."""
        workflow = StateGraph(Annotated[Dict, "verification_state"])

        workflow.add_node("build", self._build_surface)
        workflow.add_node("evaluate", self._evaluate)
        workflow.add_node("refine", self._refine)
        workflow.add_node("judge", self._judge)

        workflow.set_entry_point("build")
        workflow.add_edge("build", "evaluate")
        workflow.add_conditional_edges("evaluate", self._should_refine, {True: "refine", False: "judge"})
        workflow.add_edge("refine", "evaluate")
        workflow.add_edge("judge", END)
        return workflow.compile()

    def _build_surface(self, state: Dict[str, Any], config: RunnableConfig) -> Dict[str, Any]:
        """Build the item's surface and base point."""
        item: VerificationItem = state["item"]
        surface = build_surface(item.spec)
        o = base_point_of(surface, *item.base)
        return {**state, "surface": surface, "base_point": o, "attempt": 0, "history": []}

    def _evaluate(self, state: Dict[str, Any], config: RunnableConfig) -> Dict[str, Any]:
        """Evaluate the item's functional and the item-level tolerance."""
        configuration = Configuration.from_runnable_config(config)
        item: VerificationItem = state["item"]
        surface = state["surface"]
        try:
            report = item.evaluate(surface, state["base_point"])
        except WillmoreError as e:
            logger.warning("%s: %s", item.name, e)
            return {**state, "report": None, "error": str(e), "passed": False, "attempt": state["attempt"] + 1}

        report = report.model_copy(update={"tolerance": configuration.judged_tolerance(report.tolerance)})
        problem = item.check(report) if item.check else None
        history = state["history"] + [(surface.quadrature.base_cells_per_axis, report.residual)]
        return {
            **state,
            "report": report.model_copy(update={"refinement_history": history}),
            "history": history,
            "problem": problem,
            "passed": report.passed and problem is None,
            "attempt": state["attempt"] + 1,
        }

    def _refine(self, state: Dict[str, Any], config: RunnableConfig) -> Dict[str, Any]:
        """Double the base resolution of the surface."""
        surface = state["surface"]
        cells = surface.quadrature.base_cells_per_axis * 2
        logger.info("%s: retrying with %d base cells per axis", state["item"].name, cells)
        return {**state, "surface": surface.with_quadrature(base_cells_per_axis=cells)}

    def _judge(self, state: Dict[str, Any], config: RunnableConfig) -> Dict[str, Any]:
        """Decide PASS/FAIL for the final report."""
        item: VerificationItem = state["item"]
        report = state.get("report")
        verdict = "PASS" if state.get("passed") else "FAIL"
        if report is not None:
            logger.info(
                "%s %s residual=%.3e margin=%.3e tolerance=%.1e",
                verdict, item.name, report.residual, report.margin, report.tolerance,
            )
        else:
            logger.info("%s %s error=%s", verdict, item.name, state.get("error"))
        return {**state, "verdict": verdict}

    def _should_refine(self, state: Dict[str, Any]) -> bool:
        """Determine if a failed evaluation is retried at a finer resolution."""
        levels = state.get("refinement_levels", 0)
        return (
            not state.get("passed", False)
            and state.get("report") is not None
            and state["item"].refinable
            and state.get("attempt", 0) <= levels
        )

    def run(self, item: VerificationItem, config: Optional[RunnableConfig] = None) -> Dict[str, Any]:
        """Run the workflow for one corpus item."""
        configuration = Configuration.from_runnable_config(config)
        started = time.perf_counter()
        try:
            result = self.graph.invoke(
                {"item": item, "refinement_levels": configuration.refinement_levels}, config=config
            )
        except WillmoreError as e:
            return {"name": item.name, "verdict": "FAIL", "report": None, "error": str(e), "seconds": 0.0}

        return {
            "name": item.name,
            "verdict": result["verdict"],
            "report": result.get("report"),
            "problem": result.get("problem"),
            "error": result.get("error"),
            "seconds": time.perf_counter() - started,
        }

    def run_all(self, names: Sequence[str] = ("all",), config: Optional[RunnableConfig] = None) -> List[Dict[str, Any]]:
        """Run the workflow over the selected corpus items, in corpus order."""
        return [self.run(item, config) for item in select(names)]
