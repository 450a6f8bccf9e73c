"""Seeded synthetic corpora for desk-scale experiments.

Two registers share one closed vocabulary of a few hundred words:

* general prose -- templated sentences over everyday word banks, with a few
  fixed multi-word collocations that reward longer context windows;
* lab-report prose -- templated sentences dense in domain terms (reagents,
  apparatus, measurements).

A "domain" corpus interleaves lab sentences with general filler, the way
real in-domain text embeds ordinary language; a "general" corpus is almost
entirely general prose with a thin domain trickle. Trained on the former, a
low-order model becomes the expert; trained on ten times more of the
latter, a higher-order model becomes the generalist that is weaker
in-domain. Their per-token errors stay complementary, which is what the
fusion experiments need.

Everything is deterministic per (role, seed, size).
"""

from __future__ import annotations

import random

GENERAL_NOUNS = """
man woman child friend neighbor teacher driver farmer writer singer doctor
house garden road river bridge market school office kitchen window door
morning evening winter summer rain wind storm light shadow noise story
letter answer question journey meeting dinner holiday picture village town
city country field forest hill valley boat train horse dog cat bird tree
flower stone wall roof floor table chair bed clock book paper coat shoe
""".split()

GENERAL_ADJS = """
old young small large quiet busy bright dark warm cold heavy light early
late long short happy tired careful strange familiar empty crowded narrow
wide pleasant simple plain steady sudden gentle rough distant nearby
""".split()

GENERAL_VERBS_PAST = """
walked moved stayed waited watched opened closed carried followed crossed
reached remembered forgot noticed visited repaired painted cleaned borrowed
returned gathered counted weighed lifted dropped covered filled emptied
""".split()

GENERAL_NAMES = "anna peter maria james rosa henry clara oscar nina victor".split()

COLLOCATIONS = [
    "at the end of the day",
    "in the middle of the night",
    "for the first time in years",
    "on the other side of the river",
    "after a long and quiet winter",
    "by the time the rain stopped",
]

DOMAIN_TERMS = """
acetate buffer catalyst chloride citrate copper distillate electrolyte
ethanol ferrocyanide filtrate glucose glycerol hydroxide iodide manganese
methanol nitrate oxalate permanganate peroxide phosphate potassium reagent
residue silicate sodium solvent sulfate sulfide titrant zinc ammonium
carbonate benzoate acetone toluene phenol aniline urea starch pipette
burette flask beaker condenser crucible funnel cylinder centrifuge
""".split()

DOMAIN_QUALIFIERS = """
aqueous dilute saturated concentrated anhydrous crude purified standard
molar residual buffered chilled filtered
""".split()

DOMAIN_VERBS = """
titrated decanted filtered evaporated precipitated dissolved neutralized
oxidized reduced crystallized distilled calibrated
""".split()

NUMBER_WORDS = "2 3 5 10 15 20 25 40 50 75 100 250".split()
UNITS = "ml mg grams percent degrees minutes".split()


def _general_sentence(rng: random.Random) -> str:
    t = rng.randrange(6)
    n = lambda: rng.choice(GENERAL_NOUNS)
    a = lambda: rng.choice(GENERAL_ADJS)
    v = lambda: rng.choice(GENERAL_VERBS_PAST)
    name = lambda: rng.choice(GENERAL_NAMES)
    if t == 0:
        return f"the {a()} {n()} {v()} toward the {n()} ."
    if t == 1:
        return f"{name()} {v()} the {n()} {rng.choice(COLLOCATIONS)} ."
    if t == 2:
        return f"a {n()} and a {n()} {v()} near the {a()} {n()} ."
    if t == 3:
        return f"the {n()} was {a()} and the {n()} was {a()} ."
    if t == 4:
        return f"{name()} and {name()} {v()} past the {n()} before the {n()} ."
    return f"every {n()} in the {n()} {v()} when the {a()} {n()} {v()} ."


def _domain_sentence(rng: random.Random) -> str:
    t = rng.randrange(6)
    dt = lambda: rng.choice(DOMAIN_TERMS)
    q = lambda: rng.choice(DOMAIN_QUALIFIERS)
    dv = lambda: rng.choice(DOMAIN_VERBS)
    num = lambda: rng.choice(NUMBER_WORDS)
    unit = lambda: rng.choice(UNITS)
    if t == 0:
        return f"add {num()} {unit()} of {q()} {dt()} to the {dt()} solution ."
    if t == 1:
        return f"the {dt()} sample was {dv()} and heated to {num()} degrees ."
    if t == 2:
        return f"titration of the {q()} {dt()} against {dt()} gave {num()} percent yield ."
    if t == 3:
        return f"transfer the {dt()} into a clean {dt()} and record the mass ."
    if t == 4:
        return f"the {q()} {dt()} was {dv()} with {num()} {unit()} of {dt()} ."
    return f"after {num()} minutes the {dt()} layer {dv()} above the {q()} {dt()} ."


ROLE_DOMAIN_FRACTION = {"domain": 0.7, "general": 0.02}


def generate_text(role: str, n_bytes: int, seed: int) -> str:
    """Roughly n_bytes of synthetic text for role 'domain' or 'general'."""
    if role not in ROLE_DOMAIN_FRACTION:
        raise ValueError(f"unknown corpus role {role!r}")
    frac = ROLE_DOMAIN_FRACTION[role]
    rng = random.Random(seed)
    parts = []
    size = 0
    while size < n_bytes:
        s = _domain_sentence(rng) if rng.random() < frac else _general_sentence(rng)
        parts.append(s)
        size += len(s) + 1
    return "\n".join(parts) + "\n"


def write_corpus(path, role: str, n_bytes: int, seed: int) -> None:
    text = generate_text(role, n_bytes, seed)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
