import os

from ghcm.db import get_connection

FORMAT_VERSION = 1


def initialise_db(db_file_path):
    try:
        os.remove(db_file_path)
    except FileNotFoundError:
        pass

    conn = get_connection(db_file_path)
    cursor = conn.cursor()

    cursor.execute(
        """
        CREATE TABLE IF NOT EXISTS meta (
            key TEXT PRIMARY KEY,
            value TEXT NOT NULL
        )
        """
    )

    cursor.execute(
        """
        CREATE TABLE IF NOT EXISTS vertex (
            id INTEGER PRIMARY KEY,
            label INTEGER CHECK (label IS NULL OR label IN (1, 2))
        )
        """
    )

    cursor.execute(
        """
        CREATE TABLE IF NOT EXISTS position (
            vertex_id INTEGER NOT NULL,
            axis INTEGER NOT NULL,
            value REAL NOT NULL,
            FOREIGN KEY (vertex_id) REFERENCES vertex(id),
            PRIMARY KEY (vertex_id, axis)
        )
        """
    )

    cursor.execute(
        """
        CREATE TABLE IF NOT EXISTS edge (
            u INTEGER NOT NULL,
            v INTEGER NOT NULL,
            y REAL NOT NULL,
            FOREIGN KEY (u) REFERENCES vertex(id),
            FOREIGN KEY (v) REFERENCES vertex(id),
            PRIMARY KEY (u, v),
            CHECK (u < v)
        )
        """
    )

    conn.commit()

    conn.close()
