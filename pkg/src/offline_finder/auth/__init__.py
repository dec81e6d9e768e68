"""NS, NSL and the identity-free CF protocol, with an active intruder."""

from .engine import (
    IntruderCapabilities,
    Scene,
    SessionVerdict,
    default_scene,
    intruder_search,
    replay,
)
from .roles import CFClient, CFServer, NSInitiator, NSResponder, ProtocolAbort
from .runs import lowe_actions, run_cf_auth, run_lowe_attack, run_ns, run_nsl
from .wire import (
    AuthServer,
    BackdoorOracle,
    BehaviorProfile,
    ConnectionMetadata,
    MessageChannel,
    Principal,
    ProfileMatcher,
    ProtocolMessage,
    introduce,
    plaintext_mentions,
)

__all__ = [
    "AuthServer",
    "BackdoorOracle",
    "BehaviorProfile",
    "CFClient",
    "CFServer",
    "ConnectionMetadata",
    "IntruderCapabilities",
    "MessageChannel",
    "NSInitiator",
    "NSResponder",
    "Principal",
    "ProfileMatcher",
    "ProtocolAbort",
    "ProtocolMessage",
    "Scene",
    "SessionVerdict",
    "default_scene",
    "introduce",
    "intruder_search",
    "lowe_actions",
    "plaintext_mentions",
    "replay",
    "run_cf_auth",
    "run_lowe_attack",
    "run_ns",
    "run_nsl",
]
