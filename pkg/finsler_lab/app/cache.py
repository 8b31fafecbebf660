import hashlib
import json
import sqlite3
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .settings import get_settings


def field_key(**parts: Any) -> str:
    """SHA-256 digest of the JSON-encoded parts that determine a distance field."""
    payload = json.dumps(parts, sort_keys=True, default=lambda v: getattr(v, "tolist", lambda: str(v))())
    return hashlib.sha256(payload.encode()).hexdigest()


class FieldCache:
    def __init__(self, db_path: Optional[Union[str, Path]] = None, ttl_days: Optional[int] = None):
        """
        Initialize the distance-field cache with SQLite backend.

        Args:
            db_path: Path to SQLite database file. Defaults to the FINSLER_LAB_CACHE_PATH setting
            ttl_days: Time-to-live for cached fields in days. Defaults to FINSLER_LAB_CACHE_TTL_DAYS
        """
        settings = get_settings()
        db_path = Path(db_path) if db_path is not None else settings.cache_path
        db_path.parent.mkdir(parents=True, exist_ok=True)

        self.db_path = str(db_path)
        self.ttl_days = settings.cache_ttl_days if ttl_days is None else ttl_days
        self._init_db()

    def _init_db(self):
        """Initialize the database schema."""
        with sqlite3.connect(self.db_path) as conn:
            conn.execute("""
                CREATE TABLE IF NOT EXISTS distance_fields (
                    key TEXT PRIMARY KEY,
                    label TEXT NOT NULL,
                    data TEXT NOT NULL,
                    cached_at TIMESTAMP NOT NULL
                )
            """)
            conn.commit()

    def get(self, key: str) -> Optional[Dict[str, Any]]:
        """
        Retrieve a cached field.

        Returns:
            The stored payload if found and not expired, None otherwise
        """
        with sqlite3.connect(self.db_path) as conn:
            row = conn.execute("SELECT data, cached_at FROM distance_fields WHERE key = ?", (key,)).fetchone()
            if row is None:
                return None

            data_json, cached_at_str = row
            if datetime.now() - datetime.fromisoformat(cached_at_str) > timedelta(days=self.ttl_days):
                conn.execute("DELETE FROM distance_fields WHERE key = ?", (key,))
                conn.commit()
                return None

            return json.loads(data_json)

    def set(self, key: str, data: Dict[str, Any], label: str = ""):
        with sqlite3.connect(self.db_path) as conn:
            conn.execute(
                """
                INSERT OR REPLACE INTO distance_fields (key, label, data, cached_at)
                VALUES (?, ?, ?, ?)
                """,
                (key, label, json.dumps(data), datetime.now().isoformat())
            )
            conn.commit()

    def clear(self, key: Optional[str] = None):
        """
        Clear cache entries.

        Args:
            key: If provided, clear only this field (a unique key prefix is accepted).
                 If None, clear all cache entries.
        """
        with sqlite3.connect(self.db_path) as conn:
            if key:
                conn.execute("DELETE FROM distance_fields WHERE key LIKE ?", (key + "%",))
            else:
                conn.execute("DELETE FROM distance_fields")
            conn.commit()

    def cleanup_expired(self) -> int:
        """Remove all expired cache entries; returns how many were removed."""
        cutoff_time = datetime.now() - timedelta(days=self.ttl_days)
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.execute("DELETE FROM distance_fields WHERE cached_at < ?", (cutoff_time.isoformat(),))
            conn.commit()
            return cursor.rowcount

    def entries(self) -> List[Dict[str, Any]]:
        """Key, label, payload size and age of every cached field, newest first."""
        with sqlite3.connect(self.db_path) as conn:
            rows = conn.execute(
                "SELECT key, label, length(data), cached_at FROM distance_fields ORDER BY cached_at DESC"
            ).fetchall()
        now = datetime.now()
        return [
            {
                "key": key, "label": label, "bytes": size, "cached_at": cached_at,
                "expired": now - datetime.fromisoformat(cached_at) > timedelta(days=self.ttl_days),
            }
            for key, label, size, cached_at in rows
        ]
