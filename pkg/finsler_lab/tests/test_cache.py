import sqlite3
from datetime import datetime, timedelta

import pytest

from finsler_lab.app.cache import FieldCache, field_key


@pytest.fixture
def cache(tmp_path):
    return FieldCache(tmp_path / "cache" / "fields.db", ttl_days=7)


class TestFieldKey:
    def test_stable_under_ordering(self):
        assert field_key(a=1, b=[1.0, 2.0]) == field_key(b=[1.0, 2.0], a=1)

    def test_sensitive_to_values(self):
        assert field_key(a=1) != field_key(a=2)


class TestFieldCache:
    """sqlite-backed storage of distance fields."""

    def test_set_and_get(self, cache):
        cache.set("abc123", {"values": [0.0, 1.5]}, label="euclid@plane")
        assert cache.get("abc123") == {"values": [0.0, 1.5]}
        assert cache.get("missing") is None

    def test_entries(self, cache):
        cache.set("k1", {"values": [1.0]}, label="one")
        cache.set("k2", {"values": [2.0]}, label="two")
        entries = cache.entries()
        assert {e["key"] for e in entries} == {"k1", "k2"}
        assert all(not e["expired"] and e["bytes"] > 0 for e in entries)

    def test_clear_by_prefix(self, cache):
        cache.set("aa11", {"v": 1})
        cache.set("bb22", {"v": 2})
        cache.clear("aa")
        assert cache.get("aa11") is None
        assert cache.get("bb22") == {"v": 2}
        cache.clear()
        assert cache.entries() == []

    def test_expired_entries(self, cache):
        cache.set("old", {"v": 1})
        stale = (datetime.now() - timedelta(days=30)).isoformat()
        with sqlite3.connect(cache.db_path) as conn:
            conn.execute("UPDATE distance_fields SET cached_at = ? WHERE key = ?", (stale, "old"))
        cache.set("new", {"v": 2})
        assert cache.entries()[-1]["expired"]
        assert cache.cleanup_expired() == 1
        assert cache.get("new") == {"v": 2}

    def test_expired_entry_not_served(self, cache):
        cache.set("old", {"v": 1})
        stale = (datetime.now() - timedelta(days=30)).isoformat()
        with sqlite3.connect(cache.db_path) as conn:
            conn.execute("UPDATE distance_fields SET cached_at = ? WHERE key = ?", (stale, "old"))
        assert cache.get("old") is None
        assert cache.entries() == []
