"""Regenerate docs/config_reference.md from the key table in noisestab.config."""

from pathlib import Path

from noisestab.config import reference_markdown

if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "docs" / "config_reference.md"
    out.write_text(reference_markdown())
    print(f"wrote {out}")
