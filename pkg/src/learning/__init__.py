"""
Learning Module - Actor GNN, crítico centralizado y entrenamiento MAPPO
Responsabilidad: Autodiff, redes, buffer de experiencia, checkpoints y bucle de entrenamiento
"""

from .autodiff import ComputationRecord, Tensor, backward
from .critic import CriticParams, build_critic_features
from .policy_gnn import ActorParams, ActorShape, init_actor

__all__ = [
    'ComputationRecord', 'Tensor', 'backward',
    'CriticParams', 'build_critic_features',
    'ActorParams', 'ActorShape', 'init_actor',
]
