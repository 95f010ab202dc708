"""Seeded synthetic response corpora.

``assistant`` responses imitate a chat assistant's house style (stock
openers, enumerated lists, closing advice); ``generic`` responses are
news-style prose with a different vocabulary. Both use only words from the
bundled vocabulary, so tokenization never falls back to single characters.

Corpus files hold one response per line with backslash escapes for newlines.
"""

from __future__ import annotations

import random
from pathlib import Path
from typing import Iterable

GERUNDS = [
    "improving", "managing", "building", "reducing", "planning", "choosing",
    "learning", "keeping", "starting", "finding", "creating", "protecting",
    "organizing", "maintaining", "developing", "preparing", "balancing",
    "boosting", "writing", "cleaning", "saving", "growing", "training",
]
OBJECTS = [
    "your sleep quality", "daily stress", "a small garden", "your monthly budget",
    "a healthy diet", "a new language", "team communication", "your home office",
    "a family trip", "a strong resume", "your mental health", "a reading habit",
    "online privacy", "your morning routine", "a local business", "public speaking",
    "a wedding speech", "indoor plants", "a fitness plan", "your credit score",
    "a job interview", "household energy use", "a research paper", "a podcast",
    "remote work", "a birthday party", "your skin care", "a dog at home",
    "a vegetable soup", "winter heating costs", "a college application",
    "customer feedback", "a photography hobby", "your posture", "kitchen waste",
    "a neighborhood event", "a book club", "your computer security",
    "a rental apartment", "a marathon schedule", "entrepreneurship skills",
    "workplace responsibilities", "cultural misunderstanding",
]
ADJ = [
    "practical", "simple", "effective", "useful", "important", "helpful",
    "common", "proven", "easy", "creative", "essential", "realistic",
    "thoughtful", "quick", "reliable", "gentle", "careful", "flexible",
]
PLURAL_NOUNS = ["tips", "ways", "strategies", "ideas", "steps", "suggestions", "methods"]
VERBS = [
    "track", "review", "limit", "schedule", "improve", "protect", "reduce",
    "share", "prepare", "measure", "organize", "practice", "avoid", "plan",
    "adjust", "support", "simplify", "compare", "record", "celebrate",
    "update", "clean", "test", "choose", "explore", "strengthen",
]
NOUNS = [
    "progress", "routine", "goals", "time", "energy", "budget", "habits",
    "schedule", "priorities", "expenses", "tasks", "notes", "space",
    "screen time", "water intake", "sleep", "meals", "workload", "feedback",
    "documents", "passwords", "plants", "materials", "ingredients", "friends",
    "family", "questions", "results", "boundaries", "options", "skills",
    "equipment", "supplies", "accounts", "recommendations", "responsibilities",
]
BENEFITS = [
    "stay focused", "save money", "feel more rested", "avoid mistakes",
    "build confidence", "reduce anxiety", "make better decisions",
    "stay motivated", "work more efficiently", "keep things simple",
    "notice patterns early", "protect your health", "enjoy the process",
    "communicate more clearly", "use your time wisely", "stay organized",
]
PEOPLE = [
    "a doctor", "a friend", "a mentor", "a financial advisor", "a teacher",
    "a professional", "a local expert", "a counselor", "your manager",
]
TIMEFRAMES = [
    "every week", "each morning", "once a month", "every evening",
    "at least twice a week", "before bed", "during the weekend", "every day",
]
OPENERS_AI = ["experiences", "opinions", "feelings", "preferences", "beliefs"]
PROBLEMS = [
    "a difficult situation at work", "trouble sleeping", "a lot of stress",
    "a painful rash", "feelings of loneliness", "a stressful move",
    "money problems", "a conflict with a friend", "back pain",
    "a busy schedule", "a noisy neighbor", "a slow computer",
]

# generic, news-style pools
PLACES = [
    "Paris", "Chicago", "Berlin", "Toronto", "Madrid", "Sydney", "Denver",
    "Boston", "Dublin", "Seattle", "Oslo", "Austin", "Vienna", "Lisbon",
]
NAMES = [
    "Smith", "Johnson", "Garcia", "Miller", "Brown", "Wilson", "Taylor",
    "Anderson", "Martin", "Thompson", "Clark", "Lewis", "Walker", "Hall",
]
G_NOUNS = [
    "council", "company", "bridge", "museum", "station", "election", "report",
    "market", "festival", "stadium", "river", "airport", "factory", "library",
    "hospital", "court", "union", "police", "school", "railway", "harbor",
]
G_ADJ = [
    "old", "new", "local", "national", "historic", "large", "former",
    "public", "regional", "famous", "quiet", "busy", "modern", "small",
]
G_VERBS_PAST = [
    "opened", "closed", "announced", "reported", "approved", "rejected",
    "built", "sold", "visited", "expanded", "delayed", "confirmed",
]
G_TIMES = ["last year", "on Monday", "in March", "this week", "in the spring", "last month"]


def _pick(rng: random.Random, pool):
    return pool[rng.randrange(len(pool))]


def _cap(s: str) -> str:
    return s[0].upper() + s[1:]


def _item_sentence(rng: random.Random) -> str:
    forms = [
        lambda: f"{_cap(_pick(rng, VERBS))} your {_pick(rng, NOUNS)} {_pick(rng, TIMEFRAMES)} so you can {_pick(rng, BENEFITS)}.",
        lambda: f"Try to {_pick(rng, VERBS)} your {_pick(rng, NOUNS)} and {_pick(rng, VERBS)} your {_pick(rng, NOUNS)}, which can help you {_pick(rng, BENEFITS)}.",
        lambda: f"It is {_pick(rng, ADJ)} to {_pick(rng, VERBS)} your {_pick(rng, NOUNS)} {_pick(rng, TIMEFRAMES)} and talk to {_pick(rng, PEOPLE)} if you need help.",
        lambda: f"A {_pick(rng, ADJ)} way to {_pick(rng, BENEFITS)} is to {_pick(rng, VERBS)} your {_pick(rng, NOUNS)} {_pick(rng, TIMEFRAMES)}.",
    ]
    return _pick(rng, forms)()


def _body_sentence(rng: random.Random) -> str:
    forms = [
        lambda: f"Many people find that it helps to {_pick(rng, VERBS)} their {_pick(rng, NOUNS)} {_pick(rng, TIMEFRAMES)}.",
        lambda: f"You may also want to {_pick(rng, VERBS)} your {_pick(rng, NOUNS)} and ask {_pick(rng, PEOPLE)} for {_pick(rng, ADJ)} advice.",
        lambda: f"If you can, {_pick(rng, VERBS)} your {_pick(rng, NOUNS)} {_pick(rng, TIMEFRAMES)}, because this will help you {_pick(rng, BENEFITS)}.",
        lambda: f"Another {_pick(rng, ADJ)} step is to {_pick(rng, VERBS)} your {_pick(rng, NOUNS)} before you {_pick(rng, VERBS)} your {_pick(rng, NOUNS)}.",
    ]
    return _pick(rng, forms)()


def _closing(rng: random.Random) -> str:
    forms = [
        lambda: "Remember that small changes can make a big difference over time, so be patient with yourself.",
        lambda: f"I hope these {_pick(rng, PLURAL_NOUNS)} help you {_pick(rng, BENEFITS)}!",
        lambda: f"If the problem continues, it may be a good idea to talk to {_pick(rng, PEOPLE)}.",
        lambda: f"Overall, the most {_pick(rng, ADJ)} approach is to {_pick(rng, VERBS)} your {_pick(rng, NOUNS)} and {_pick(rng, BENEFITS)}.",
    ]
    return _pick(rng, forms)()


def assistant_response(rng: random.Random) -> str:
    kind = rng.randrange(4)
    topic = f"{_pick(rng, GERUNDS)} {_pick(rng, OBJECTS)}"
    if kind == 0:
        n_items = rng.randint(3, 5)
        parts = [
            f"Certainly! Here are some {_pick(rng, ADJ)} {_pick(rng, PLURAL_NOUNS)} for {topic}:"
        ]
        for i in range(1, n_items + 1):
            title = f"{_cap(_pick(rng, VERBS))} your {_pick(rng, NOUNS)}"
            parts.append(f"\n\n{i}. {title}: {_item_sentence(rng)}")
        parts.append("\n\n" + _closing(rng))
        return "".join(parts)
    if kind == 1:
        head = (
            f"As an AI language model, I don't have personal {_pick(rng, OPENERS_AI)}, "
            f"but I can share some {_pick(rng, ADJ)} information about {topic}."
        )
    elif kind == 2:
        head = (
            f"I'm sorry to hear that you are dealing with {_pick(rng, PROBLEMS)}. "
            f"Here are some {_pick(rng, ADJ)} {_pick(rng, PLURAL_NOUNS)} that may help."
        )
    else:
        head = f"Sure, I can help you with {topic}. {_body_sentence(rng)}"
    body = [_body_sentence(rng) for _ in range(rng.randint(2, 4))]
    return " ".join([head, *body, _closing(rng)])


def generic_response(rng: random.Random) -> str:
    def sentence():
        forms = [
            lambda: f"The {_pick(rng, G_ADJ)} {_pick(rng, G_NOUNS)} in {_pick(rng, PLACES)} was {_pick(rng, G_VERBS_PAST)} {_pick(rng, G_TIMES)}.",
            lambda: f"{_pick(rng, NAMES)} said that the {_pick(rng, G_NOUNS)} would be {_pick(rng, G_VERBS_PAST)} after the {_pick(rng, G_NOUNS)} {_pick(rng, G_VERBS_PAST)} its plans.",
            lambda: f"Officials in {_pick(rng, PLACES)} {_pick(rng, G_VERBS_PAST)} a {_pick(rng, G_ADJ)} {_pick(rng, G_NOUNS)} near the {_pick(rng, G_NOUNS)} {_pick(rng, G_TIMES)}.",
            lambda: f"According to the {_pick(rng, G_ADJ)} {_pick(rng, G_NOUNS)}, the {_pick(rng, G_NOUNS)} of {_pick(rng, PLACES)} has {_pick(rng, G_VERBS_PAST)} more than {rng.randint(2, 99)} new projects.",
        ]
        return _pick(rng, forms)()

    return " ".join(sentence() for _ in range(rng.randint(3, 5)))


def synthetic_corpus(n: int, seed: int = 0, style: str = "assistant") -> list[str]:
    """Generate *n* responses deterministically from *seed*."""
    gen = {"assistant": assistant_response, "generic": generic_response}
    if style not in gen:
        raise ValueError(f"unknown corpus style {style!r}")
    rng = random.Random(f"{style}:{seed}")
    return [gen[style](rng) for _ in range(n)]


def corpus_words() -> set[str]:
    """Every word the generators can emit (used to build the bundled word list)."""
    pools: list[Iterable[str]] = [
        GERUNDS, OBJECTS, ADJ, PLURAL_NOUNS, VERBS, NOUNS, BENEFITS, PEOPLE,
        TIMEFRAMES, OPENERS_AI, PROBLEMS, PLACES, NAMES, G_NOUNS, G_ADJ,
        G_VERBS_PAST, G_TIMES,
    ]
    words = set()
    for pool in pools:
        for phrase in pool:
            words.update(phrase.split())
    return words


def escape_record(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\n", "\\n").replace("\r", "\\r")


def unescape_record(line: str) -> str:
    out = []
    i = 0
    while i < len(line):
        c = line[i]
        if c == "\\" and i + 1 < len(line):
            nxt = line[i + 1]
            out.append({"n": "\n", "r": "\r", "\\": "\\"}.get(nxt, "\\" + nxt))
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def load_corpus(path: str | Path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [unescape_record(line.rstrip("\r\n")) for line in fh if line.strip()]


def save_corpus(responses: Iterable[str], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in responses:
            fh.write(escape_record(r) + "\n")
