"""
Cache management utility for computed distance fields.

This script allows you to:
- Delete a specific field from the cache (by key prefix)
- Clear all cache entries
- List all cached fields
- View cache statistics

Usage:
    python manage_cache.py --delete 3fa2c1
    python manage_cache.py --list
    python manage_cache.py --clear-all
    python manage_cache.py --stats
    python manage_cache.py --cleanup-expired
"""

import argparse
from datetime import datetime
from pathlib import Path
from typing import Optional

from finsler_lab.app.cache import FieldCache


def _age(cached_at_str: str) -> str:
    delta = datetime.now() - datetime.fromisoformat(cached_at_str)
    return f"{delta.seconds // 3600}h" if delta.days == 0 else f"{delta.days}d"


def list_cached_fields(cache: FieldCache):
    """List all fields currently in the cache."""
    entries = cache.entries()
    if not entries:
        print("📭 Cache is empty - no distance fields cached")
        return

    print(f"\n📊 Cached Distance Fields ({len(entries)} total):")
    print("=" * 90)
    print(f"{'Key':<14} {'Label':<44} {'Size (KB)':<11} {'Age':<8} {'Expired'}")
    print("-" * 90)
    for entry in entries:
        print(f"{entry['key'][:12]:<14} {entry['label'][:42]:<44} {entry['bytes'] / 1024:<11.1f} "
              f"{_age(entry['cached_at']):<8} {'yes' if entry['expired'] else ''}")
    print("=" * 90)


def show_cache_stats(cache: FieldCache):
    """Display cache statistics."""
    entries = cache.entries()
    expired_count = sum(entry["expired"] for entry in entries)

    print("\n📈 Cache Statistics:")
    print("=" * 60)
    print(f"Total entries: {len(entries)}")
    print(f"Valid entries: {len(entries) - expired_count}")
    print(f"Expired entries: {expired_count}")
    print(f"TTL: {cache.ttl_days} days")

    if entries:
        newest, oldest = entries[0]["cached_at"], entries[-1]["cached_at"]
        print(f"Oldest entry: {oldest} ({_age(oldest)} ago)")
        print(f"Newest entry: {newest} ({_age(newest)} ago)")
        print(f"Payload total: {sum(entry['bytes'] for entry in entries) / 1024:.2f} KB")

    db_path = Path(cache.db_path)
    if db_path.exists():
        print(f"Database size: {db_path.stat().st_size / 1024:.2f} KB")

    print("=" * 60)


def find_entry(cache: FieldCache, prefix: str) -> Optional[dict]:
    matches = [entry for entry in cache.entries() if entry["key"].startswith(prefix)]
    if len(matches) > 1:
        print(f"⚠️  Key prefix '{prefix}' is ambiguous ({len(matches)} matches); give more characters")
        return None
    return matches[0] if matches else None


def delete_field(cache: FieldCache, prefix: str):
    """Delete a specific field from the cache."""
    entry = find_entry(cache, prefix)
    if entry is None:
        print(f"❌ Field '{prefix}' not found in cache")
        return False

    print(f"🔍 Found field '{entry['key'][:12]}' ({entry['label']}, cached at {entry['cached_at']})")
    cache.clear(entry["key"])
    print(f"✅ Successfully deleted '{entry['key'][:12]}' from cache")
    return True


def clear_all_cache(cache: FieldCache, confirm: bool = True):
    """Clear all cache entries."""
    if confirm:
        response = input("\n⚠️  Are you sure you want to clear ALL cache entries? (y/n): ").strip().lower()
        if response not in ['y', 'yes']:
            print("❌ Cancelled - no entries deleted")
            return False

    cache.clear()
    print("✅ All cache entries cleared successfully")
    return True


def cleanup_expired_entries(cache: FieldCache):
    """Remove expired cache entries."""
    removed = cache.cleanup_expired()
    if removed == 0:
        print("✅ No expired entries to clean up")
        return
    print(f"🧹 Removed {removed} expired entries (older than {cache.ttl_days} days)")


def main():
    parser = argparse.ArgumentParser(
        description="Manage the distance-field cache",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python manage_cache.py --list                    # List all cached fields
  python manage_cache.py --delete 3fa2c1           # Delete one field by key prefix
  python manage_cache.py --delete 3fa2c1 9b07de    # Delete several fields
  python manage_cache.py --stats                   # Show cache statistics
  python manage_cache.py --clear-all               # Clear entire cache
  python manage_cache.py --cleanup-expired         # Remove expired entries
        """
    )

    parser.add_argument(
        "--delete",
        "-d",
        nargs="+",
        metavar="KEY",
        help="Delete field(s) by key prefix"
    )

    parser.add_argument(
        "--list",
        "-l",
        action="store_true",
        help="List all cached fields"
    )

    parser.add_argument(
        "--stats",
        "-s",
        action="store_true",
        help="Show cache statistics"
    )

    parser.add_argument(
        "--clear-all",
        action="store_true",
        help="Clear all cache entries (with confirmation)"
    )

    parser.add_argument(
        "--cleanup-expired",
        action="store_true",
        help="Remove expired cache entries"
    )

    parser.add_argument(
        "--yes",
        "-y",
        action="store_true",
        help="Skip confirmation prompts"
    )

    args = parser.parse_args()

    cache = FieldCache()

    print("\n" + "=" * 60)
    print("📦 Distance-Field Cache Manager")
    print("=" * 60)
    print(f"Cache location: {cache.db_path}")
    print(f"TTL: {cache.ttl_days} days")

    if not any([args.delete, args.list, args.stats, args.clear_all, args.cleanup_expired]):
        print("\n💡 No action specified. Use --help to see available options")
        print("\nQuick actions:")
        print("  --list              List cached fields")
        print("  --stats             Show statistics")
        print("  --delete KEY        Delete a field")
        return

    if args.list:
        list_cached_fields(cache)

    if args.stats:
        show_cache_stats(cache)

    if args.delete:
        print()
        for prefix in args.delete:
            delete_field(cache, prefix)

    if args.cleanup_expired:
        print()
        cleanup_expired_entries(cache)

    if args.clear_all:
        print()
        clear_all_cache(cache, confirm=not args.yes)

    print()


if __name__ == "__main__":
    main()
