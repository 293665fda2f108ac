"""
Cell Pipeline - LangGraph Workflow

Runs one shape through mesh → assemble → solve → homogenize → gradient.
A failing node records its exception in the state; later nodes skip and the
caller re-raises it, so typed errors keep their exit codes.
"""

import logging
from typing import Any, Dict, Optional, TypedDict

from langgraph.graph import StateGraph, END

from core.coeff import SigmaPair
from core.fem import CellSolutions, LinearSystem, SolverSettings, assemble_system, solve_cell_problems
from core.geometry import RadialShape
from core.homogenize import EffectiveTensor, TargetTensor, effective_tensor, matching_objective
from core.mesh import CellMesh, build_mesh
from core.optimize import Evaluation, Problem
from core.shapecalc import InterfaceTraces, ShapeGradient, objective_gradient, recover_interface_traces
from core.specs import CellCase


logger = logging.getLogger(__name__)


class CellState(TypedDict):
    """State passed between pipeline nodes."""
    shape: RadialShape
    case: CellCase
    sigma: SigmaPair
    level: int
    solver: SolverSettings
    target: Optional[TargetTensor]
    with_gradient: bool
    mesh: Optional[CellMesh]
    system: Optional[LinearSystem]
    solutions: Optional[CellSolutions]
    tensor: Optional[EffectiveTensor]
    objective: Optional[float]
    traces: Optional[InterfaceTraces]
    gradient: Optional[ShapeGradient]
    error: Optional[Exception]


class CellPipeline:
    """Evaluates shapes with a compiled LangGraph workflow."""

    def __init__(self):
        """Initialize pipeline with LangGraph workflow."""
        self.workflow = self._build_workflow()

    def _build_workflow(self):
        """Build the LangGraph workflow."""
        workflow = StateGraph(CellState)

        workflow.add_node("mesh", self._mesh_node)
        workflow.add_node("assemble", self._assemble_node)
        workflow.add_node("solve", self._solve_node)
        workflow.add_node("homogenize", self._homogenize_node)
        workflow.add_node("gradient", self._gradient_node)

        workflow.set_entry_point("mesh")
        workflow.add_edge("mesh", "assemble")
        workflow.add_edge("assemble", "solve")
        workflow.add_edge("solve", "homogenize")
        workflow.add_conditional_edges(
            "homogenize",
            self._route_after_homogenize,
            {"gradient": "gradient", "done": END},
        )
        workflow.add_edge("gradient", END)

        return workflow.compile()

    def _mesh_node(self, state: CellState) -> CellState:
        """Build the curved macro layout and refine it."""
        try:
            state["mesh"] = build_mesh(state["shape"], state["level"], state["case"])
            state["error"] = None
        except Exception as e:
            state["error"] = e
        return state

    def _assemble_node(self, state: CellState) -> CellState:
        if state.get("error"):
            return state
        try:
            state["system"] = assemble_system(state["mesh"], state["sigma"], state["case"])
        except Exception as e:
            state["error"] = e
        return state

    def _solve_node(self, state: CellState) -> CellState:
        if state.get("error"):
            return state
        try:
            state["solutions"] = solve_cell_problems(state["system"], state["solver"])
        except Exception as e:
            state["error"] = e
        return state

    def _homogenize_node(self, state: CellState) -> CellState:
        """Effective tensor, and J when a target is set."""
        if state.get("error"):
            return state
        try:
            tensor = effective_tensor(state["mesh"], state["sigma"], state["solutions"], state["case"])
            state["tensor"] = tensor
            if state.get("target") is not None:
                state["objective"], _ = matching_objective(tensor, state["target"])
        except Exception as e:
            state["error"] = e
        return state

    def _route_after_homogenize(self, state: CellState) -> str:
        if state.get("error") or not state.get("with_gradient") or state.get("target") is None:
            return "done"
        return "gradient"

    def _gradient_node(self, state: CellState) -> CellState:
        try:
            traces = recover_interface_traces(
                state["mesh"], state["solutions"], state["sigma"], state["case"]
            )
            state["traces"] = traces
            state["gradient"] = objective_gradient(
                state["shape"], traces, state["tensor"], state["target"]
            )
        except Exception as e:
            state["error"] = e
        return state

    def run(
        self,
        shape: RadialShape,
        case: CellCase,
        sigma: SigmaPair,
        level: int,
        solver: SolverSettings = SolverSettings(),
        target: Optional[TargetTensor] = None,
        with_gradient: bool = True,
    ) -> Dict[str, Any]:
        """
        Run the workflow for one shape.

        Returns:
            Final state dictionary

        Raises:
            The exception recorded by the first failing node
        """
        initial_state: CellState = {
            "shape": shape,
            "case": case,
            "sigma": sigma,
            "level": level,
            "solver": solver,
            "target": target,
            "with_gradient": with_gradient,
            "mesh": None,
            "system": None,
            "solutions": None,
            "tensor": None,
            "objective": None,
            "traces": None,
            "gradient": None,
            "error": None,
        }

        final_state = self.workflow.invoke(initial_state)

        if final_state.get("error") is not None:
            raise final_state["error"]
        return final_state

    def evaluate(self, problem: Problem, shape: RadialShape) -> Evaluation:
        """Objective and gradient at one shape, for the optimizer."""
        state = self.run(
            shape, problem.case, problem.sigma, problem.level,
            solver=problem.solver, target=problem.target, with_gradient=True,
        )
        solutions = state["solutions"]
        return Evaluation(
            shape=shape,
            tensor=state["tensor"],
            objective=state["objective"],
            gradient=state["gradient"],
            iterations=solutions.iterations,
            residual=solutions.residual,
        )

    def evaluator(self, problem: Problem):
        """Bind a problem, giving the shape -> Evaluation callable minimize expects."""
        return lambda shape: self.evaluate(problem, shape)


# Global pipeline instance
pipeline = CellPipeline()
