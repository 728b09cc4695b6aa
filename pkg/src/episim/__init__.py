"""Agent-based epidemic simulation on a bipartite people/locations visit graph."""

from .disease import DiseaseModel, builtin_model_path, load_disease_model
from .engine import DayStats, RunConfig, SeedingSchedule, Simulation, run
from .models import ContactModelParams, TransmissionParams
from .population import Population, generate_synthetic, load_population, synthetic_preset

__all__ = [
    "ContactModelParams", "DayStats", "DiseaseModel", "Population", "RunConfig", "SeedingSchedule",
    "Simulation", "TransmissionParams", "builtin_model_path", "generate_synthetic", "load_disease_model",
    "load_population", "run", "synthetic_preset",
]
__version__ = "0.1.0"
