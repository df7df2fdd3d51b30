"""
Config Models - Modelos Pydantic de configuración
Responsabilidad: Definir y validar la configuración del entorno, del entrenamiento y de los
experimentos, leída desde archivos clave = valor.
"""

import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class AttritionEvent(BaseModel):
    """Baja de un agente en un paso fijo."""
    model_config = ConfigDict(frozen=True)

    step: int = Field(..., ge=0)
    agent: int = Field(..., ge=0)


def parse_attrition(value: Any) -> List[AttritionEvent]:
    """
    Interpreta 'paso:agente,paso:agente' (o una lista ya estructurada).

    Examples:
        parse_attrition("300:1,600:0") -> [AttritionEvent(300, 1), AttritionEvent(600, 0)]
    """
    if value is None or value == "":
        return []
    if isinstance(value, str):
        events = []
        for chunk in value.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            try:
                step, agent = chunk.split(":")
                events.append(AttritionEvent(step=int(step), agent=int(agent)))
            except ValueError:
                raise ValueError(f"Evento de baja inválido '{chunk}' (formato paso:agente)")
        return events
    return [e if isinstance(e, AttritionEvent) else AttritionEvent.model_validate(e) for e in value]


class EnvironmentConfig(BaseModel):
    """Configuración del simulador y del calendario de perturbaciones."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    comm_success: float = Field(default=1.0, ge=0.0, le=1.0)
    obs_radius: float = Field(default=math.inf, gt=0.0)
    attrition: List[AttritionEvent] = Field(default_factory=list)
    zeta_scale: float = Field(default=50.0, gt=0.0)
    # None: sin recompensa terminal (evaluación de horizonte abierto)
    episode_len: Optional[int] = Field(default=200, ge=2)
    seed: int = 0
    telemetry_period: int = Field(default=1, ge=1)
    agent_belief_ttl: int = Field(default=30, ge=1)
    max_neighbors: int = Field(default=10, ge=1)
    reward_alpha: float = 1.0
    reward_beta: float = 0.5
    reward_epsilon: float = Field(default=1e-5, gt=0.0)

    @field_validator("attrition", mode="before")
    @classmethod
    def _parse_attrition(cls, value):
        return parse_attrition(value)

    def attrition_schedule(self) -> Dict[int, List[int]]:
        """Paso -> agentes a dar de baja en ese paso."""
        schedule: Dict[int, List[int]] = {}
        for event in self.attrition:
            schedule.setdefault(event.step, []).append(event.agent)
        return schedule


class TrainConfig(BaseModel):
    """Hiperparámetros de MAPPO y del actor/crítico."""
    model_config = ConfigDict(extra="forbid")

    gamma: float = Field(default=0.99, gt=0.0, le=1.0)
    gae_lambda: float = Field(default=0.95, gt=0.0, le=1.0)
    clip_ratio: float = Field(default=0.2, gt=0.0)
    entropy_coef: float = Field(default=0.01, ge=0.0)
    value_coef: float = Field(default=0.5, ge=0.0)
    epochs: int = Field(default=4, ge=1)
    minibatches: int = Field(default=4, ge=1)
    n_envs: int = Field(default=5, ge=1)
    episode_len: int = Field(default=200, ge=2)
    total_env_steps: int = Field(default=350_000, ge=0)
    reward_alpha: float = 1.0
    reward_beta: float = 0.5
    seed: int = 0
    n_agents: int = Field(default=2, ge=1)

    learning_rate: float = Field(default=3e-4, gt=0.0)
    adam_beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    max_grad_norm: Optional[float] = Field(default=0.5, gt=0.0)

    gnn_layers: int = Field(default=10, ge=1)
    hidden_size: int = Field(default=64, ge=1)
    scorer_hidden: int = Field(default=64, ge=1)
    selector_hidden: int = Field(default=64, ge=1)
    critic_hidden: int = Field(default=128, ge=1)
    max_neighbors: int = Field(default=10, ge=1)
    max_agents: int = Field(default=8, ge=1)
    zeta_scale: float = Field(default=50.0, gt=0.0)

    eval_every: int = Field(default=5, ge=1)
    checkpoint_every: int = Field(default=10, ge=1)
    output_dir: str = "output/train"

    @model_validator(mode="after")
    def _check_agents(self):
        if self.n_agents > self.max_agents:
            raise ValueError(f"n_agents ({self.n_agents}) excede max_agents ({self.max_agents})")
        return self

    def environment_config(self) -> EnvironmentConfig:
        """Entorno de entrenamiento: sin bajas, observación y comunicación perfectas."""
        return EnvironmentConfig(
            episode_len=self.episode_len,
            zeta_scale=self.zeta_scale,
            seed=self.seed,
            max_neighbors=self.max_neighbors,
            reward_alpha=self.reward_alpha,
            reward_beta=self.reward_beta,
        )


PolicyKind = Literal["magec", "random", "greedy"]


class ExperimentConfig(BaseModel):
    """Configuración de una evaluación (una política, un calendario de perturbaciones)."""
    model_config = ConfigDict(extra="forbid")

    graph_path: str
    policy: PolicyKind = "magec"
    checkpoint: Optional[str] = None
    n_agents: int = Field(default=2, ge=1)
    obs_radius: float = Field(default=math.inf, gt=0.0)
    comm_success: float = Field(default=1.0, ge=0.0, le=1.0)
    attrition: List[AttritionEvent] = Field(default_factory=list)
    horizon: int = Field(default=1800, ge=1)
    repeats: int = Field(default=3, ge=1)
    seeds: List[int] = Field(default_factory=list)
    output_dir: str = "output/eval"
    telemetry_period: int = Field(default=1, ge=1)
    agent_belief_ttl: int = Field(default=30, ge=1)
    # None: se usa la escala guardada en el checkpoint (o la del entorno por defecto)
    zeta_scale: Optional[float] = Field(default=None, gt=0.0)
    stochastic_eval: bool = False
    label: Optional[str] = None

    @field_validator("attrition", mode="before")
    @classmethod
    def _parse_attrition(cls, value):
        return parse_attrition(value)

    @field_validator("seeds", mode="before")
    @classmethod
    def _parse_seeds(cls, value):
        if isinstance(value, str):
            return [int(s) for s in value.split(",") if s.strip()]
        return value

    @model_validator(mode="after")
    def _check_policy(self):
        if self.policy == "magec" and not self.checkpoint:
            raise ValueError("La política 'magec' requiere --checkpoint")
        if self.seeds and len(self.seeds) < self.repeats:
            raise ValueError(f"Se pidieron {self.repeats} repeticiones pero sólo hay {len(self.seeds)} semillas")
        for event in self.attrition:
            if event.step >= self.horizon:
                raise ValueError(f"Baja en el paso {event.step} fuera del horizonte {self.horizon}")
            if event.agent >= self.n_agents:
                raise ValueError(f"Baja del agente {event.agent}, pero sólo hay {self.n_agents} agentes")
        return self

    def run_seeds(self) -> List[int]:
        return list(self.seeds[: self.repeats]) if self.seeds else list(range(self.repeats))

    def environment_config(self, seed: int, max_neighbors: int,
                           zeta_scale: float = 50.0) -> EnvironmentConfig:
        return EnvironmentConfig(
            comm_success=self.comm_success,
            obs_radius=self.obs_radius,
            attrition=self.attrition,
            zeta_scale=self.zeta_scale or zeta_scale,
            episode_len=None,
            seed=seed,
            telemetry_period=self.telemetry_period,
            agent_belief_ttl=self.agent_belief_ttl,
            max_neighbors=max_neighbors,
        )

    def display_label(self) -> str:
        return self.label or self.policy


def load_settings(path: Optional[str]) -> Dict[str, str]:
    """
    Carga un archivo clave = valor (comentarios con '#').

    Args:
        path: Ruta al archivo (None -> diccionario vacío)

    Returns:
        Diccionario de cadenas sin validar; los modelos Pydantic hacen la conversión
    """
    if not path:
        return {}
    config_file = Path(path)
    if not config_file.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    values = dotenv_values(config_file, encoding="utf-8")
    return {key: value for key, value in values.items() if value is not None and value != ""}


def merge_overrides(settings: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Aplica los flags de la CLI (ignorando los no especificados)."""
    merged = dict(settings)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    return merged


def split_settings(settings: Dict[str, Any], model: type) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    """Separa las claves que pertenecen a `model` del resto."""
    own = {k: v for k, v in settings.items() if k in model.model_fields}
    rest = {k: v for k, v in settings.items() if k not in model.model_fields}
    return own, rest
