import filecmp
import os
import sqlite3
import tempfile
import unittest

import numpy as np

from ghcm.db import dump_instance, get_connection, get_meta, load_instance, read_labeling, write_labeling
from ghcm.instance import PublicInstance, SampleInstance
from ghcm.recovery import Labeling
from ghcm.sampler import sample_ghcm
from ghcm.schema import FORMAT_VERSION
from ghcm.util import ALGORITHM_VERSION, MAP_SEED, PROPAGATED, CorruptInstanceError
from tests.utils import pds_params, sl_params


class TestInstanceDump(unittest.TestCase):
    def setUp(self):
        self.workdir = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.workdir.name, "instance.sqlite")
        self.inst = sample_ghcm(sl_params(n=500), 7)

    def tearDown(self):
        self.workdir.cleanup()

    def test_dump_and_load(self):
        dump_instance(self.inst, self.path)
        loaded = load_instance(self.path)
        self.assertIsInstance(loaded, SampleInstance)
        self.assertEqual(loaded.params, self.inst.params)
        self.assertEqual(loaded.seed, 7)
        np.testing.assert_array_equal(loaded.positions, self.inst.positions)
        np.testing.assert_array_equal(loaded.true_labels, self.inst.true_labels)
        np.testing.assert_array_equal(loaded.public.pairs, self.inst.public.pairs)
        np.testing.assert_array_equal(loaded.public.values, self.inst.public.values)

    def test_meta(self):
        dump_instance(self.inst, self.path)
        connection = get_connection(self.path)
        meta = get_meta(connection)
        connection.close()
        self.assertEqual(meta["format_version"], FORMAT_VERSION)
        self.assertEqual(meta["edge_count"], self.inst.edge_count)
        self.assertTrue(meta["has_labels"])

    def test_public_dump(self):
        dump_instance(self.inst.public, self.path)
        loaded = load_instance(self.path)
        self.assertIsInstance(loaded, PublicInstance)
        dump_instance(self.inst, self.path, include_labels=False)
        self.assertIsInstance(load_instance(self.path), PublicInstance)

    def test_byte_identical(self):
        other = os.path.join(self.workdir.name, "again.sqlite")
        dump_instance(sample_ghcm(pds_params(n=500), 3), self.path)
        dump_instance(sample_ghcm(pds_params(n=500), 3), other)
        self.assertTrue(filecmp.cmp(self.path, other, shallow=False))

    def test_missing_file(self):
        with self.assertRaises(CorruptInstanceError):
            load_instance(os.path.join(self.workdir.name, "missing.sqlite"))

    def test_not_a_database(self):
        with open(self.path, "w") as handle:
            handle.write("not sqlite at all" * 100)
        with self.assertRaises(CorruptInstanceError):
            load_instance(self.path)

    def test_tampered_edges(self):
        dump_instance(self.inst, self.path)
        connection = sqlite3.connect(self.path)
        u, v = self.inst.public.pairs[0].tolist()
        connection.execute("DELETE FROM edge WHERE u = ? AND v = ?", (u, v))
        connection.execute("UPDATE meta SET value = ? WHERE key = 'edge_count'", (str(self.inst.edge_count - 1),))
        connection.commit()
        connection.close()
        with self.assertRaises(CorruptInstanceError):
            load_instance(self.path)

    def test_wrong_version(self):
        dump_instance(self.inst, self.path)
        connection = sqlite3.connect(self.path)
        connection.execute("UPDATE meta SET value = '99' WHERE key = 'format_version'")
        connection.commit()
        connection.close()
        with self.assertRaises(CorruptInstanceError):
            load_instance(self.path)


class TestLabelingFile(unittest.TestCase):
    def test_write_and_read(self):
        labeling = Labeling(
            labels=np.array([1, 2, 2], dtype=np.int8),
            provenance=np.array([MAP_SEED, PROPAGATED, PROPAGATED], dtype=object),
        )
        with tempfile.TemporaryDirectory() as workdir:
            path = os.path.join(workdir, "labels.csv")
            write_labeling(labeling, path, {"seed": 3})
            with open(path) as handle:
                lines = handle.read().splitlines()
            self.assertTrue(lines[0].startswith("# "))
            self.assertEqual(lines[1], "vertex_id,label,provenance")
            self.assertEqual(lines[2], "0,1,map_seed")
            header, loaded = read_labeling(path)
        self.assertEqual(header["algorithm"], ALGORITHM_VERSION)
        self.assertEqual(header["seed"], 3)
        np.testing.assert_array_equal(loaded.labels, labeling.labels)
        self.assertEqual(loaded.provenance.tolist(), labeling.provenance.tolist())

    def test_rejects_unknown_provenance(self):
        with tempfile.TemporaryDirectory() as workdir:
            path = os.path.join(workdir, "labels.csv")
            with open(path, "w") as handle:
                handle.write('# {"algorithm": "x"}\nvertex_id,label,provenance\n0,1,guess\n')
            with self.assertRaises(CorruptInstanceError):
                read_labeling(path)


if __name__ == "__main__":
    unittest.main()
