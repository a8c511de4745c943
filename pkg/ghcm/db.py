import csv
import json
import sqlite3

import numpy as np

from ghcm.geometry import pairs_within
from ghcm.instance import ModelParams, PublicInstance, SampleInstance
from ghcm.recovery import Labeling
from ghcm.util import (
    ALGORITHM_VERSION,
    PROVENANCE_TAGS,
    ConfigurationError,
    CorruptInstanceError,
    logger,
)


def get_connection(db_file_path):
    conn = sqlite3.connect(db_file_path)
    cursor = conn.cursor()
    cursor.execute("PRAGMA foreign_keys = ON")
    return conn


def set_meta(connection, key, value):
    cursor = connection.cursor()
    cursor.execute(
        """
        INSERT INTO meta (key, value) VALUES (?, ?)
        ON CONFLICT(key) DO UPDATE SET value = EXCLUDED.value
        """,
        (key, json.dumps(value, sort_keys=True)),
    )


def get_meta(connection):
    cursor = connection.cursor()
    cursor.execute("SELECT key, value FROM meta")
    return {key: json.loads(value) for key, value in cursor.fetchall()}


def dump_instance(inst, db_file_path, include_labels=True):
    """Write an instance as a self-describing sqlite file (labels optional)."""
    from ghcm.schema import FORMAT_VERSION, initialise_db

    initialise_db(db_file_path)
    labeled = include_labels and isinstance(inst, SampleInstance)
    public = inst.public if isinstance(inst, SampleInstance) else inst

    connection = get_connection(db_file_path)
    set_meta(connection, "format_version", FORMAT_VERSION)
    set_meta(connection, "params", public.params.to_json())
    set_meta(connection, "seed", public.seed)
    set_meta(connection, "vertex_count", public.vertex_count)
    set_meta(connection, "edge_count", public.edge_count)
    set_meta(connection, "has_labels", labeled)

    labels = inst.true_labels.tolist() if labeled else [None] * public.vertex_count
    cursor = connection.cursor()
    cursor.executemany(
        "INSERT INTO vertex (id, label) VALUES (?, ?)",
        zip(range(public.vertex_count), labels),
    )
    cursor.executemany(
        "INSERT INTO position (vertex_id, axis, value) VALUES (?, ?, ?)",
        (
            (vertex, axis, value)
            for vertex, row in enumerate(public.positions.tolist())
            for axis, value in enumerate(row)
        ),
    )
    cursor.executemany(
        "INSERT INTO edge (u, v, y) VALUES (?, ?, ?)",
        zip(
            public.pairs[:, 0].tolist(),
            public.pairs[:, 1].tolist(),
            public.values.tolist(),
        ),
    )
    connection.commit()
    connection.close()
    logger.info(
        f"Dumped instance to {db_file_path}",
        extra={"extra": {"vertices": public.vertex_count, "edges": public.edge_count}},
    )


def load_instance(db_file_path):
    """SampleInstance when labels were dumped, PublicInstance otherwise."""
    from ghcm.schema import FORMAT_VERSION

    try:
        connection = sqlite3.connect(f"file:{db_file_path}?mode=ro", uri=True)
        try:
            meta = get_meta(connection)
            cursor = connection.cursor()
            cursor.execute("SELECT id, label FROM vertex ORDER BY id")
            vertices = cursor.fetchall()
            cursor.execute("SELECT vertex_id, axis, value FROM position ORDER BY vertex_id, axis")
            positions = cursor.fetchall()
            cursor.execute("SELECT u, v, y FROM edge ORDER BY u, v")
            edges = cursor.fetchall()
        finally:
            connection.close()
    except sqlite3.Error as e:
        raise CorruptInstanceError(f"DB: cannot read instance {db_file_path}: {e}") from e

    try:
        if meta["format_version"] != FORMAT_VERSION:
            raise CorruptInstanceError(
                f"DB: unsupported format version {meta['format_version']}"
            )
        params = ModelParams.from_json(meta["params"])
        count = int(meta["vertex_count"])
        seed = int(meta["seed"])
        has_labels = bool(meta["has_labels"])
    except (KeyError, TypeError, ValueError, ConfigurationError) as e:
        raise CorruptInstanceError(f"DB: malformed header in {db_file_path}: {e}") from e

    if len(vertices) != count or [row[0] for row in vertices] != list(range(count)):
        raise CorruptInstanceError("DB: vertex table does not match header")
    if len(positions) != count * params.d or len(edges) != int(meta["edge_count"]):
        raise CorruptInstanceError("DB: position or edge table does not match header")

    coords = np.array([row[2] for row in positions], dtype=float).reshape(count, params.d)
    pairs = np.array([row[:2] for row in edges], dtype=np.int64).reshape(-1, 2)
    values = np.array([row[2] for row in edges], dtype=float)
    if not np.array_equal(pairs, pairs_within(coords, params.side, params.radius)):
        raise CorruptInstanceError("DB: edge keys differ from the visible pairs of the positions")

    public = PublicInstance(params, coords, pairs, values, seed)
    if not has_labels:
        return public
    labels = [row[1] for row in vertices]
    if any(label not in (1, 2) for label in labels):
        raise CorruptInstanceError("DB: labeled instance has missing labels")
    return SampleInstance(public, labels)


def write_labeling(labeling: Labeling, path, header=None):
    """`#`-prefixed JSON header, then vertex_id,label,provenance rows."""
    meta = {"algorithm": ALGORITHM_VERSION}
    meta.update(header or {})
    with open(path, "w", newline="") as handle:
        handle.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["vertex_id", "label", "provenance"])
        for vertex, (label, tag) in enumerate(zip(labeling.labels.tolist(), labeling.provenance)):
            writer.writerow([vertex, label, tag])


def read_labeling(path):
    with open(path, newline="") as handle:
        first = handle.readline()
        if not first.startswith("# "):
            raise CorruptInstanceError(f"DB: {path} has no labeling header")
        header = json.loads(first[2:])
        reader = csv.DictReader(handle)
        rows = list(reader)
    if [int(row["vertex_id"]) for row in rows] != list(range(len(rows))):
        raise CorruptInstanceError(f"DB: {path} vertex ids are not contiguous")
    if any(row["provenance"] not in PROVENANCE_TAGS for row in rows):
        raise CorruptInstanceError(f"DB: {path} has unknown provenance tags")
    labeling = Labeling(
        labels=np.array([int(row["label"]) for row in rows], dtype=np.int8),
        provenance=np.array([row["provenance"] for row in rows], dtype=object),
    )
    return header, labeling
