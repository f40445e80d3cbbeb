"""Mesoscopic point-queue traffic simulator."""
from .core import (BACKEND, MetricsFrame, Simulation, Vehicle, available_backends,
                   compute_reward, observation_size, observe, sim_step)
from .demand import DemandSpec, Flow, grid_demand, load_demand, spawn_arrivals, vc_periods
from .network import Link, Movement, Node, Phase, RoadNetwork, build_grid, data_path, load_network

__all__ = [
    "BACKEND", "DemandSpec", "Flow", "Link", "MetricsFrame", "Movement", "Node", "Phase",
    "RoadNetwork", "Simulation", "Vehicle", "available_backends", "build_grid",
    "compute_reward", "data_path", "grid_demand", "load_demand", "load_network",
    "observation_size", "observe", "sim_step", "spawn_arrivals", "vc_periods",
]
