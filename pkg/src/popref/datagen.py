"""Seeded generation of reference-act datasets, serialization, and statistics.

A reference act pairs one linguistic query with a short candidate sequence
and a gold outcome: either the index of the single matching candidate, or an
anomaly flag (no match at all, or more than one).  Two generators are
provided: object-only acts (query = a noun, candidates = object images) and
attribute-bearing acts (query = noun + attribute, candidates = images tagged
with attributes, built around a pool of one-coordinate confounders).

Both generators draw every act from its own child seed derived from the
master seed and the act's index, so a split can be sharded into ranges and
generated in parallel with byte-identical results.  Every act passes the
gold-consistency validator before it is emitted.
"""

import json
from dataclasses import dataclass

from .errors import ConfigError, GenerationError, ParseError, ValidationError
from .numerics import Rng, derive_seed

POINT = "point"
ANOMALY = "anomaly"
MISS = "miss"
MULT = "mult"

_MAX_CONSTRAINT_RETRIES = 1000


@dataclass(frozen=True)
class Gold:
    """The annotated outcome of a reference act.

    Exactly one of ``index`` (for pointing) and ``anomaly_kind`` (for
    protests) is set; the two anomaly subtypes share the protest outcome and
    exist only so evaluation can itemize accuracy.
    """

    kind: str
    index: int | None = None
    anomaly_kind: str | None = None

    @staticmethod
    def point(index: int) -> "Gold":
        return Gold(kind=POINT, index=index)

    @staticmethod
    def miss() -> "Gold":
        return Gold(kind=ANOMALY, anomaly_kind=MISS)

    @staticmethod
    def mult() -> "Gold":
        return Gold(kind=ANOMALY, anomaly_kind=MULT)

    def validate(self) -> None:
        if self.kind == POINT:
            if self.index is None or self.anomaly_kind is not None:
                raise ValidationError(f"inconsistent point gold: {self}")
            if self.index < 0:
                raise ValidationError(f"negative gold index: {self.index}")
        elif self.kind == ANOMALY:
            if self.index is not None or self.anomaly_kind not in (MISS, MULT):
                raise ValidationError(f"inconsistent anomaly gold: {self}")
        else:
            raise ValidationError(f"unknown gold kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "index": self.index, "anomaly_kind": self.anomaly_kind}


@dataclass(frozen=True)
class Query:
    noun: str
    attribute: str | None = None


@dataclass(frozen=True)
class Item:
    """One candidate: an object instance shown as a specific image."""

    object: str
    image_id: str
    attribute: str | None = None


@dataclass(frozen=True)
class ReferenceAct:
    id: str
    query: Query
    items: tuple[Item, ...]
    gold: Gold


@dataclass(frozen=True)
class DatasetSpec:
    """Lengths, anomaly rates, split sizes, and the master seed."""

    min_len: int = 2
    max_len: int = 5
    p_miss: float = 0.15
    p_mult: float = 0.15
    n_train: int = 40000
    n_val: int = 5000
    n_test: int = 10000
    seed: int = 0

    def validate(self) -> None:
        if not (2 <= self.min_len <= self.max_len):
            raise ConfigError(
                f"need 2 <= min_len <= max_len, got [{self.min_len}, {self.max_len}]"
            )
        if self.p_miss < 0 or self.p_mult < 0:
            raise ConfigError("anomaly probabilities must be >= 0")
        if self.p_miss + self.p_mult >= 1:
            raise ConfigError(
                f"anomaly probabilities must sum below 1, got "
                f"{self.p_miss} + {self.p_mult}"
            )
        for name, n in (("n_train", self.n_train), ("n_val", self.n_val),
                        ("n_test", self.n_test)):
            if n < 0:
                raise ConfigError(f"{name} must be >= 0, got {n}")

    def to_dict(self) -> dict:
        return {
            "min_len": self.min_len,
            "max_len": self.max_len,
            "p_miss": self.p_miss,
            "p_mult": self.p_mult,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "n_test": self.n_test,
            "seed": self.seed,
        }


def matches(item: Item, query: Query) -> bool:
    """Whether a candidate satisfies the query.

    Object-only queries match on the noun; attribute-bearing queries require
    BOTH coordinates to agree, so sharing just the object or just the
    attribute is a confounder, not a match.
    """
    if item.object != query.noun:
        return False
    if query.attribute is None:
        return True
    return item.attribute == query.attribute


def validate_act(
    act: ReferenceAct, min_len: int | None = None, max_len: int | None = None
) -> None:
    """Check gold consistency; raises ValidationError naming the act."""
    act.gold.validate()
    n = len(act.items)
    if n == 0:
        raise ValidationError(f"act {act.id!r}: empty candidate sequence")
    if min_len is not None and n < min_len:
        raise ValidationError(f"act {act.id!r}: length {n} below minimum {min_len}")
    if max_len is not None and n > max_len:
        raise ValidationError(f"act {act.id!r}: length {n} above maximum {max_len}")
    has_attr = act.query.attribute is not None
    for item in act.items:
        if (item.attribute is not None) != has_attr:
            raise ValidationError(
                f"act {act.id!r}: attribute fields must be all-present or all-absent"
            )
    match_count = sum(1 for item in act.items if matches(item, act.query))
    if act.gold.kind == POINT:
        if act.gold.index >= n:
            raise ValidationError(
                f"act {act.id!r}: gold index {act.gold.index} out of range for {n} items"
            )
        if not matches(act.items[act.gold.index], act.query):
            raise ValidationError(
                f"act {act.id!r}: item at gold index does not match the query"
            )
        if match_count != 1:
            raise ValidationError(
                f"act {act.id!r}: point gold requires exactly 1 match, found {match_count}"
            )
    elif act.gold.anomaly_kind == MISS:
        if match_count != 0:
            raise ValidationError(
                f"act {act.id!r}: missing-referent gold requires 0 matches, "
                f"found {match_count}"
            )
    else:
        if match_count < 2:
            raise ValidationError(
                f"act {act.id!r}: multiple-referent gold requires >= 2 matches, "
                f"found {match_count}"
            )


def _draw_anomaly(rng: Rng, spec: DatasetSpec) -> str | None:
    """One categorical draw over {miss, mult, success} with the marginal rates."""
    u = rng.random()
    if u < spec.p_miss:
        return MISS
    if u < spec.p_miss + spec.p_mult:
        return MULT
    return None


def _fresh_image(rng: Rng, images: list[str], avoid: str) -> str:
    """An image of the same object, distinct from ``avoid`` when possible."""
    pool = [im for im in images if im != avoid]
    return rng.choice(pool) if pool else avoid


def _shuffled_with_query_pos(rng: Rng, items: list[Item]) -> tuple[list[Item], int]:
    """Shuffle candidates uniformly; report where slot 0 (the query item) lands."""
    perm = list(range(len(items)))
    rng.shuffle(perm)
    shuffled = [items[p] for p in perm]
    return shuffled, perm.index(0)


def _one_object_only(world, spec: DatasetSpec, rng: Rng) -> tuple[Query, list[Item], Gold]:
    length = spec.min_len + rng.randrange(spec.max_len - spec.min_len + 1)
    objs = rng.sample(world.objects, length)
    items = [Item(obj, rng.choice(world.images[obj])) for obj in objs]
    query = Query(noun=objs[0])

    anomaly = _draw_anomaly(rng, spec)
    if anomaly == MISS:
        # Replace the query slot with an object absent from the sequence,
        # leaving zero matching candidates.
        in_seq = set(objs)
        fresh = rng.choice([obj for obj in world.objects if obj not in in_seq])
        items[0] = Item(fresh, rng.choice(world.images[fresh]))
    elif anomaly == MULT:
        # Overwrite a non-query slot with a second instance of the query
        # object under a different image.
        j = 1 + rng.randrange(length - 1)
        items[j] = Item(
            objs[0], _fresh_image(rng, world.images[objs[0]], items[0].image_id)
        )

    items, query_pos = _shuffled_with_query_pos(rng, items)
    if anomaly == MISS:
        gold = Gold.miss()
    elif anomaly == MULT:
        gold = Gold.mult()
    else:
        gold = Gold.point(query_pos)
    return query, items, gold


def gen_object_only(world, spec: DatasetSpec, rng: Rng, count: int,
                    start: int = 0, id_prefix: str = "act"):
    """Yield ``count`` object-only reference acts.

    Per act: draw the sequence length uniformly, fill the slots with distinct
    objects (sampling without replacement keeps gold semantics intact at any
    vocabulary size) and one uniform image each, take slot 0 as the query,
    then apply at most one anomaly edit and shuffle.  Act ``i`` is drawn from
    ``derive_seed(rng.seed, "object-only", start + i)``.
    """
    spec.validate()
    if len(world.objects) < spec.max_len + 1:
        raise ConfigError(
            f"world has {len(world.objects)} objects; object-only generation "
            f"needs at least max_len + 1 = {spec.max_len + 1}"
        )
    for i in range(count):
        index = start + i
        act_rng = Rng(derive_seed(rng.seed, "object-only", index))
        query, items, gold = _one_object_only(world, spec, act_rng)
        act = ReferenceAct(
            id=f"{id_prefix}-{index:06d}", query=query, items=tuple(items), gold=gold
        )
        validate_act(act, spec.min_len, spec.max_len)
        yield act


def _one_object_attribute(world, spec: DatasetSpec, rng: Rng) -> tuple[Query, list[Item], Gold]:
    length = spec.min_len + rng.randrange(spec.max_len - spec.min_len + 1)

    query_obj = rng.choice(world.objects)
    own_attrs = list(world.compat[query_obj])
    attr1 = rng.choice(own_attrs)
    attr2, attr3 = rng.sample([a for a in own_attrs if a != attr1], 2)

    def partner(attr: str) -> str:
        others = [obj for obj in world.inverse_compat[attr] if obj != query_obj]
        if not others:
            raise GenerationError(
                f"attribute {attr!r} has no compatible object besides {query_obj!r}"
            )
        return rng.choice(others)

    obj2 = partner(attr2)
    obj3 = partner(attr3)
    query_image = rng.choice(world.images[query_obj])

    # Six confounders, each sharing at most one coordinate with the query
    # pair; images sampled per entry.
    pool_pairs = [
        (attr2, query_obj),
        (attr1, obj2),
        (attr2, obj2),
        (attr3, query_obj),
        (attr1, obj3),
        (attr3, obj3),
    ]
    pool = [
        Item(obj, rng.choice(world.images[obj]), attribute=attr)
        for attr, obj in pool_pairs
    ]

    items = [Item(query_obj, query_image, attribute=attr1)]
    items.extend(rng.sample(pool, length - 1))
    query = Query(noun=query_obj, attribute=attr1)

    anomaly = _draw_anomaly(rng, spec)
    if anomaly == MISS:
        # Replace the query slot with any compatible pair other than the
        # query pair itself; no candidate then matches on both coordinates.
        for _ in range(_MAX_CONSTRAINT_RETRIES):
            obj = rng.choice(world.objects)
            attr = rng.choice(list(world.compat[obj]))
            if (obj, attr) != (query_obj, attr1):
                break
        else:
            raise GenerationError(
                f"could not sample a non-matching pair for object {query_obj!r}"
            )
        items[0] = Item(obj, rng.choice(world.images[obj]), attribute=attr)
    elif anomaly == MULT:
        j = 1 + rng.randrange(length - 1)
        items[j] = Item(
            query_obj,
            _fresh_image(rng, world.images[query_obj], query_image),
            attribute=attr1,
        )

    items, query_pos = _shuffled_with_query_pos(rng, items)
    if anomaly == MISS:
        gold = Gold.miss()
    elif anomaly == MULT:
        gold = Gold.mult()
    else:
        gold = Gold.point(query_pos)
    return query, items, gold


def gen_object_attribute(world, spec: DatasetSpec, rng: Rng, count: int,
                         start: int = 0, id_prefix: str = "act"):
    """Yield ``count`` attribute-bearing reference acts.

    Per act: sample the query pair (object, compatible attribute) and an
    image; sample two more attributes of the query object and one partner
    object per attribute; build the six-confounder pool; fill the sequence
    with the query item plus confounders sampled without replacement; apply
    at most one anomaly edit; shuffle.  A candidate matches only when BOTH
    its object and its attribute equal the query's.
    """
    spec.validate()
    if spec.max_len > 7:
        raise ConfigError(
            f"attribute-bearing acts draw non-query items from a 6-confounder "
            f"pool, so max_len must be <= 7, got {spec.max_len}"
        )
    for i in range(count):
        index = start + i
        act_rng = Rng(derive_seed(rng.seed, "object-attribute", index))
        query, items, gold = _one_object_attribute(world, spec, act_rng)
        act = ReferenceAct(
            id=f"{id_prefix}-{index:06d}", query=query, items=tuple(items), gold=gold
        )
        validate_act(act, spec.min_len, spec.max_len)
        yield act


GENERATORS = {
    "object-only": gen_object_only,
    "object-attr": gen_object_attribute,
}


def generate_splits(world, spec: DatasetSpec, task: str) -> dict[str, list[ReferenceAct]]:
    """Generate the train/val/test splits for a task.

    Each split draws from its own child of ``spec.seed``, so regenerating any
    single split (or resizing another) leaves the rest byte-identical.
    """
    if task not in GENERATORS:
        raise ConfigError(
            f"unknown task {task!r}; expected one of {sorted(GENERATORS)}"
        )
    gen = GENERATORS[task]
    splits = {}
    for split, count in (("train", spec.n_train), ("val", spec.n_val),
                         ("test", spec.n_test)):
        split_rng = Rng(derive_seed(spec.seed, task, split))
        splits[split] = list(gen(world, spec, split_rng, count, id_prefix=split))
    return splits


def act_to_dict(act: ReferenceAct) -> dict:
    return {
        "id": act.id,
        "query": {"noun": act.query.noun, "attribute": act.query.attribute},
        "items": [
            {"object": it.object, "image_id": it.image_id, "attribute": it.attribute}
            for it in act.items
        ],
        "gold": act.gold.to_dict(),
    }


def _require(record: dict, key: str, lineno: int):
    if key not in record:
        raise ParseError(f"record missing {key!r}", line=lineno)
    return record[key]


def _require_str(record: dict, key: str, lineno: int) -> str:
    value = _require(record, key, lineno)
    if not isinstance(value, str):
        raise ParseError(f"field {key!r} must be a string", line=lineno)
    return value


def _require_opt_str(record: dict, key: str, lineno: int) -> str | None:
    value = _require(record, key, lineno)
    if value is not None and not isinstance(value, str):
        raise ParseError(f"field {key!r} must be a string or null", line=lineno)
    return value


def act_from_dict(record: dict, lineno: int = 0) -> ReferenceAct:
    if not isinstance(record, dict):
        raise ParseError("record must be a JSON object", line=lineno)
    act_id = _require_str(record, "id", lineno)
    query_rec = _require(record, "query", lineno)
    if not isinstance(query_rec, dict):
        raise ParseError("field 'query' must be an object", line=lineno)
    query = Query(
        noun=_require_str(query_rec, "noun", lineno),
        attribute=_require_opt_str(query_rec, "attribute", lineno),
    )
    items_rec = _require(record, "items", lineno)
    if not isinstance(items_rec, list) or not items_rec:
        raise ParseError("field 'items' must be a nonempty array", line=lineno)
    items = []
    for item_rec in items_rec:
        if not isinstance(item_rec, dict):
            raise ParseError("each item must be an object", line=lineno)
        items.append(
            Item(
                object=_require_str(item_rec, "object", lineno),
                image_id=_require_str(item_rec, "image_id", lineno),
                attribute=_require_opt_str(item_rec, "attribute", lineno),
            )
        )
    gold_rec = _require(record, "gold", lineno)
    if not isinstance(gold_rec, dict):
        raise ParseError("field 'gold' must be an object", line=lineno)
    kind = _require_str(gold_rec, "kind", lineno)
    index = _require(gold_rec, "index", lineno)
    if index is not None and not isinstance(index, int):
        raise ParseError("field 'index' must be an integer or null", line=lineno)
    anomaly_kind = _require_opt_str(gold_rec, "anomaly_kind", lineno)
    gold = Gold(kind=kind, index=index, anomaly_kind=anomaly_kind)
    try:
        gold.validate()
    except ValidationError as exc:
        raise ParseError(str(exc), line=lineno) from None
    return ReferenceAct(id=act_id, query=query, items=tuple(items), gold=gold)


def write_jsonl(acts, path) -> None:
    """Write acts as one JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for act in acts:
            fh.write(json.dumps(act_to_dict(act), sort_keys=True))
            fh.write("\n")


def read_jsonl(path) -> list[ReferenceAct]:
    """Read acts back; schema violations raise ParseError with a line number."""
    acts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
            acts.append(act_from_dict(record, lineno))
    return acts


_COMBO_KINDS = ("object", "object+image", "object+attribute", "object+attribute+image")


def _combo_counts(acts) -> dict[str, dict]:
    counts = {kind: {} for kind in _COMBO_KINDS}

    def bump(kind: str, key) -> None:
        table = counts[kind]
        table[key] = table.get(key, 0) + 1

    for act in acts:
        for item in act.items:
            bump("object", item.object)
            bump("object+image", (item.object, item.image_id))
            if item.attribute is not None:
                bump("object+attribute", (item.object, item.attribute))
                bump("object+attribute+image",
                     (item.object, item.attribute, item.image_id))
    return counts


@dataclass
class StatsReport:
    """Average combination frequencies plus train/test overlap percentages.

    ``avg_frequency`` maps split name -> combination kind -> mean token count
    per distinct combination (None when the kind does not occur, e.g.
    attribute columns on object-only data).  ``unseen_pct`` gives, per kind,
    the percentage of the second split's distinct combinations that never
    occur in the first; it is None unless two splits were supplied.
    """

    avg_frequency: dict[str, dict[str, float | None]]
    unseen_pct: dict[str, float | None] | None

    def to_dict(self) -> dict:
        return {"avg_frequency": self.avg_frequency, "unseen_pct": self.unseen_pct}

    def to_text(self) -> str:
        def fmt(value: float | None) -> str:
            return "--" if value is None else f"{value:.1f}"

        header = ["split"] + list(_COMBO_KINDS)
        lines = ["\t".join(header)]
        for split, freqs in self.avg_frequency.items():
            lines.append(
                "\t".join([split] + [fmt(freqs[kind]) for kind in _COMBO_KINDS])
            )
        if self.unseen_pct is not None:
            lines.append(
                "\t".join(
                    ["unseen-%"] + [fmt(self.unseen_pct[kind]) for kind in _COMBO_KINDS]
                )
            )
        return "\n".join(lines)


def dataset_stats(acts, test_acts=None) -> StatsReport:
    """Average combination frequencies, optionally with train/test overlap.

    Counts object, object+image, object+attribute, and full-triple
    occurrences across candidate items.  The average frequency of a kind is
    total occurrences divided by distinct combinations.  With a second
    stream, also reports the percentage of its distinct combinations unseen
    in the first.
    """
    acts = list(acts)
    if not acts:
        raise ValidationError("dataset_stats needs a nonempty act stream")
    first = _combo_counts(acts)
    avg = {"train" if test_acts is not None else "all": {
        kind: (sum(table.values()) / len(table) if table else None)
        for kind, table in first.items()
    }}
    unseen = None
    if test_acts is not None:
        test_acts = list(test_acts)
        if not test_acts:
            raise ValidationError("dataset_stats needs a nonempty test stream")
        second = _combo_counts(test_acts)
        avg["test"] = {
            kind: (sum(table.values()) / len(table) if table else None)
            for kind, table in second.items()
        }
        unseen = {}
        for kind in _COMBO_KINDS:
            test_keys = set(second[kind])
            if not test_keys:
                unseen[kind] = None
            else:
                novel = len(test_keys - set(first[kind]))
                unseen[kind] = 100.0 * novel / len(test_keys)
    return StatsReport(avg_frequency=avg, unseen_pct=unseen)
