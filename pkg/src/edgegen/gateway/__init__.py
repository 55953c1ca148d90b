from .core import Gateway, GenerationJob, NodeState
from .store import SessionStore

__all__ = ["Gateway", "GenerationJob", "NodeState", "SessionStore"]
