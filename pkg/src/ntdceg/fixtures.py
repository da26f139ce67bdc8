"""Ground-truth fixtures: the prison radicalisation models.

Each inmate is followed through slices in which three variables are
observed in order: social network ``N`` (sporadic, frequent, intense),
radicalisation ``R`` (resistant, vulnerable, adopter) and transfer ``T``
(no transfer, transferred).  A transfer ends the observation.

The stage structures below are the reference ones; the probability values
are illustrative numbers chosen so that distinct stages carry distinct
distributions.
"""

from __future__ import annotations

from .model import RECURRENT, TERMINAL, EventTree, StagedTreePrefix, TogSpec, Vertex, staging_from_function

NETWORK = ("s", "f", "i")
RADICAL = ("r", "v", "a")
TRANSFER = ("n", "t")


def radicalisation_slice_tree() -> EventTree:
    nested = {n: {r: {"n": RECURRENT, "t": TERMINAL} for r in RADICAL} for n in NETWORK}
    return EventTree.from_nested(nested)


def radicalisation_tog(with_conviction: bool = False) -> TogSpec:
    t_minus1 = None
    if with_conviction:
        t_minus1 = EventTree.from_nested({c: {"b": None, "f": None} for c in ("y", "n")})
    return TogSpec(radicalisation_slice_tree(), t_minus1)


# -- the single-population model -------------------------------------------

RADICALISATION_PROBS = {
    "u0": (0.5, 0.3, 0.2),
    "u1": (0.7, 0.25, 0.05),
    "u2": (0.5, 0.35, 0.15),
    "u3": (0.3, 0.4, 0.3),
    "u4": (0.9, 0.1),
    "u5": (0.6, 0.4),
    "u6": (0.7, 0.2, 0.1),
    "u7": (0.2, 0.6, 0.2),
    "u8": (0.1, 0.3, 0.6),
    "u9": (0.75, 0.2, 0.05),
    "u10": (0.55, 0.3, 0.15),
    "u11": (0.35, 0.35, 0.3),
    "u12": (0.1, 0.2, 0.7),
    "u13": (0.92, 0.08),
    "u14": (0.65, 0.35),
}


def radicalisation_stage(v: Vertex, offset: int = 0) -> str:
    """Stage of a situation of the single-population model.

    ``offset`` skips a leading time-invariant segment.
    """
    segs = v[offset:]
    cur = segs[-1]
    depth = len(cur)
    if len(segs) == 1:
        if depth == 0:
            return "u0"
        if depth == 1:
            return f"u{1 + NETWORK.index(cur[0])}"
        return "u5" if cur[1] == "a" else "u4"
    prev = segs[-2]
    if depth == 0:
        return f"u{6 + NETWORK.index(prev[0])}"
    if depth == 1:
        return "u12" if prev[1] == "a" else f"u{9 + NETWORK.index(cur[0])}"
    return "u14" if cur[1] == "a" else "u13"


def radicalisation_model(horizon: int = 2) -> StagedTreePrefix:
    """The two time-slice radicalisation model with its 15 stages."""
    return staging_from_function(radicalisation_tog(), horizon, radicalisation_stage, RADICALISATION_PROBS)


# -- the second panel ---------------------------------------------------------
#
# Panel 2 distinguishes only low (sporadic or frequent) and high (intense)
# networks, lets R depend on the previous adopter status and the current
# network class, and T on R alone.

PANEL2_PROBS = {
    "ua": (0.45, 0.35, 0.2),
    "ub": (0.6, 0.3, 0.1),
    "uc": (0.1, 0.2, 0.7),
    "ud": (0.85, 0.15),
    "ue": (0.65, 0.35),
    "uf": (0.5, 0.3, 0.2),
    "ug": (0.7, 0.2, 0.1),
    "uh": (0.65, 0.25, 0.1),
    "ui": (0.4, 0.35, 0.25),
}


def _low(n: str) -> bool:
    return n in ("s", "f")


def panel2_stage(v: Vertex, offset: int = 0) -> str:
    segs = v[offset:]
    cur = segs[-1]
    depth = len(cur)
    if len(segs) == 1:
        if depth == 0:
            return "ua"
        if depth == 1:
            return "ub" if _low(cur[0]) else "uc"
        return "ue" if cur[1] == "a" else "ud"
    prev = segs[-2]
    if depth == 0:
        return "uf" if _low(prev[0]) else "ug"
    if depth == 1:
        if prev[1] == "a":
            return "uc"
        return "uh" if _low(cur[0]) else "ui"
    return "ue" if cur[1] == "a" else "ud"


def panel2_model(horizon: int = 2) -> StagedTreePrefix:
    return staging_from_function(radicalisation_tog(), horizon, panel2_stage, PANEL2_PROBS)


# -- the reference graph ---------------------------------------------------------
#
# Positions w0..w27 with their reference stage memberships, and the edges
# implied by the stage semantics.  Edge kinds: "within", "temporal", "cyclic".

REFERENCE_STAGES = {
    "u0": ["w0"],
    "u1": ["w1"],
    "u2": ["w2"],
    "u3": ["w3"],
    "u4": ["w4", "w5", "w6"],
    "u5": ["w7", "w8", "w9"],
    "u6": ["w10", "w13"],
    "u7": ["w11", "w14"],
    "u8": ["w12", "w15"],
    "u9": ["w16"],
    "u10": ["w17"],
    "u11": ["w18"],
    "u12": ["w19", "w20", "w21"],
    "u13": ["w22", "w23", "w24"],
    "u14": ["w25", "w26", "w27"],
}


def reference_graph_edges() -> list[tuple[str, str, str]]:
    edges = []
    w = lambda i: f"w{i}"  # noqa: E731
    for k, n in enumerate(NETWORK):
        edges.append((w(0), w(1 + k), n))
        for r in RADICAL:
            edges.append((w(1 + k), w(7 + k) if r == "a" else w(4 + k), r))
        # slice-0 transfer outcomes
        edges.append((w(4 + k), w(10 + k), "n"))
        edges.append((w(7 + k), w(13 + k), "n"))
        edges.append((w(4 + k), "winf0", "t"))
        edges.append((w(7 + k), "winf0", "t"))
    for k in range(3):
        for j, n in enumerate(NETWORK):
            edges.append((w(10 + k), w(16 + j), n))
            edges.append((w(13 + k), w(19 + j), n))
    for j in range(3):
        for r in RADICAL:
            tgt_non, tgt_adopt = w(22 + j), w(25 + j)
            edges.append((w(16 + j), tgt_adopt if r == "a" else tgt_non, r))
            edges.append((w(19 + j), tgt_adopt if r == "a" else tgt_non, r))
        edges.append((w(22 + j), w(10 + j), "n"))
        edges.append((w(25 + j), w(13 + j), "n"))
        edges.append((w(22 + j), "winf", "t"))
        edges.append((w(25 + j), "winf", "t"))
    return edges


# -- the network/radicalisation/transfer DBN -----------------------------------
#
# Parents follow the six unconditional statements of the example: R(0) on
# N(0), T on the current R, N on the previous N, and R on the previous R and
# the current N.  The rows are generic, so none of the context-specific
# statements hold.


def radicalisation_dbn():
    from .dbn import Cpt, DbnSpec, Variable

    variables = (
        Variable("N", NETWORK),
        Variable("R", RADICAL),
        Variable("T", TRANSFER, terminal=("t",)),
    )
    r_h = {
        ("r", "s"): (0.8, 0.15, 0.05),
        ("r", "f"): (0.6, 0.3, 0.1),
        ("r", "i"): (0.4, 0.4, 0.2),
        ("v", "s"): (0.5, 0.4, 0.1),
        ("v", "f"): (0.3, 0.5, 0.2),
        ("v", "i"): (0.2, 0.45, 0.35),
        ("a", "s"): (0.15, 0.25, 0.6),
        ("a", "f"): (0.1, 0.2, 0.7),
        ("a", "i"): (0.05, 0.15, 0.8),
    }
    tables = (
        Cpt("N", 0, (), {(): RADICALISATION_PROBS["u0"]}),
        Cpt("R", 0, (("N", 0),), {(n,): RADICALISATION_PROBS[f"u{1 + k}"] for k, n in enumerate(NETWORK)}),
        Cpt("T", 0, (("R", 0),), {("r",): (0.9, 0.1), ("v",): (0.88, 0.12), ("a",): (0.6, 0.4)}),
        Cpt("N", "H", (("N", 1),), {(n,): RADICALISATION_PROBS[f"u{6 + k}"] for k, n in enumerate(NETWORK)}),
        Cpt("R", "H", (("R", 1), ("N", 0)), r_h),
        Cpt("T", "H", (("R", 0),), {("r",): (0.92, 0.08), ("v",): (0.9, 0.1), ("a",): (0.65, 0.35)}),
    )
    return DbnSpec(variables, 2, tables)


def reference_isomorphisms(model) -> list[dict[str, str]]:
    """All maps from reference position names onto ``model``'s positions.

    A map must carry the reference graph onto the model graph edge for edge
    (labels included) and send every reference stage onto one model stage.
    """
    import networkx as nx
    from networkx.algorithms.isomorphism import MultiDiGraphMatcher

    reference_stage = {w: s for s, ws in REFERENCE_STAGES.items() for w in ws}
    size = {s: len(ws) for s, ws in model.stages.items()}
    g = nx.MultiDiGraph()
    for n, p in model.positions.items():
        g.add_node(n, k=size[p.stage])
    for s in model.sinks:
        g.add_node(s, k=s)
    for e in model.edges:
        g.add_edge(e.source, e.target, label=e.label)
    h = nx.MultiDiGraph()
    for w, s in reference_stage.items():
        h.add_node(w, k=len(REFERENCE_STAGES[s]))
    h.add_node("winf0", k="winf0")
    h.add_node("winf", k="winf")
    for a, b, label in reference_graph_edges():
        h.add_edge(a, b, label=label)

    def labels(d):
        return sorted(x["label"] for x in d.values())

    matcher = MultiDiGraphMatcher(
        h, g, node_match=lambda a, b: a["k"] == b["k"], edge_match=lambda a, b: labels(a) == labels(b)
    )
    out = []
    for iso in matcher.isomorphisms_iter():
        images: dict[str, set] = {}
        for w, s in reference_stage.items():
            images.setdefault(s, set()).add(model.positions[iso[w]].stage)
        ok = all(len(v) == 1 for v in images.values()) and len({next(iter(v)) for v in images.values()}) == len(images)
        if ok:
            out.append(dict(iso))
    return out


def match_stage_memberships(model, reference: dict[str, list[str]] = REFERENCE_STAGES) -> dict[str, str] | None:
    """A stage relabelling under which ``model``'s stage blocks equal the reference ones.

    Positions are matched through ``reference_isomorphisms``; returns
    reference stage -> model stage, or ``None`` when no bijection exists.
    """
    for iso in reference_isomorphisms(model):
        rename = {s: model.positions[iso[ws[0]]].stage for s, ws in reference.items()}
        if all(sorted(iso[w] for w in ws) == sorted(model.stages[rename[s]]) for s, ws in reference.items()):
            if len(set(rename.values())) == len(rename) == len(model.stages):
                return rename
    return None
