"""Benchmark worlds: grid navigation and the shopping-request dialog."""
from .dialog import (DialogConfig, DialogEnv, Person, build_dialog_domain, delivery_reward,
                     dialog_observe, true_facts)
from .navigation import NavConfig, NavigationEnv, build_navigation_domain, navigation_step
from .ontology import Ontology, item_closeness, room_closeness
from .presets import PRESETS, build_preset, preset

__all__ = [
    "DialogConfig", "DialogEnv", "NavConfig", "NavigationEnv", "Ontology", "PRESETS", "Person",
    "build_dialog_domain", "build_navigation_domain", "build_preset", "delivery_reward",
    "dialog_observe", "item_closeness", "navigation_step", "preset", "room_closeness",
    "true_facts",
]
