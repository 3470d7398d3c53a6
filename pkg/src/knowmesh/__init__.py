"""Deterministic simulator of smart objects that trade knowledge over IoT links."""

from .errors import *  # noqa: F401,F403
from .exchange import (
    DEFAULT_PROFILES,
    Frame,
    Message,
    MessageKind,
    ProtocolProfile,
    SmartObject,
    decode_frames,
    encode_message,
    handle_message,
)
from .harness import (
    Scenario,
    extract_events,
    generate_stream,
    load_scenario,
    load_scenario_file,
    resolve_scenario,
    run_scenario,
    dump_store,
)
from .knowledge import (
    Hypothesis,
    HypothesisState,
    KnowledgeLevel,
    KnowledgeStore,
    Observation,
    Triple,
    canonicalize_term,
    deserialize_store,
    serialize_store,
)
from .lexicon import Lexicon, load_lexicon
from .lifecycle import (
    IntervalRule,
    Thresholds,
    abduce,
    evaluate_promotion,
    induce_interval_rules,
    record_activation,
    verify_hypothesis,
    wilson_interval,
)
from .netsim import Link, LinkMode, Node, Role, Simulation

__version__ = "0.1.0"
