"""
Download and extract the CIFAR-10 binary version.

Usage:
    python scripts/fetch_cifar10.py [target_dir]

The six batch files end up in <target_dir>/cifar-10-batches-bin/, which is what
``--dataset cifar10:<target_dir>`` expects.
"""
import hashlib
import sys
import tarfile
from pathlib import Path

import httpx

CIFAR10_URL = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"
CIFAR10_MD5 = "c32a1d4ab5d03f1284b67883e8d87530"
ARCHIVE_NAME = "cifar-10-binary.tar.gz"
CHUNK_SIZE = 1 << 20


def download(url: str, destination: Path) -> Path:
    """Stream ``url`` to ``destination``, checking the archive digest."""
    digest = hashlib.md5()
    partial = destination.with_suffix(destination.suffix + ".part")
    with httpx.stream("GET", url, follow_redirects=True, timeout=60.0) as response:
        response.raise_for_status()
        total = int(response.headers.get("content-length", 0))
        received = 0
        with open(partial, "wb") as f:
            for chunk in response.iter_bytes(CHUNK_SIZE):
                f.write(chunk)
                digest.update(chunk)
                received += len(chunk)
                if total:
                    print(f"\r  {received / total:6.1%} of {total / 1e6:.0f} MB", end="", flush=True)
    print()
    if digest.hexdigest() != CIFAR10_MD5:
        partial.unlink()
        raise RuntimeError(f"Checksum mismatch for {url}: got {digest.hexdigest()}")
    partial.replace(destination)
    return destination


def extract(archive: Path, target_dir: Path) -> Path:
    with tarfile.open(archive, "r:gz") as tar:
        for member in tar.getmembers():
            # archive members must stay inside the target directory
            if member.name.startswith("/") or ".." in Path(member.name).parts:
                raise RuntimeError(f"Unsafe path in archive: {member.name}")
        tar.extractall(target_dir)
    return target_dir / "cifar-10-batches-bin"


if __name__ == "__main__":
    target = Path(sys.argv[1] if len(sys.argv) > 1 else "./data").resolve()
    target.mkdir(parents=True, exist_ok=True)

    print("=" * 50)
    print("Fetching CIFAR-10 (binary version)")
    print("=" * 50)

    archive = target / ARCHIVE_NAME
    if archive.exists():
        print(f"Reusing {archive}")
    else:
        print(f"Downloading {CIFAR10_URL}")
        download(CIFAR10_URL, archive)

    batches = extract(archive, target)
    print()
    print(f"[OK] Batches in {batches}")
    print(f"   run with: python -m multidetect all --dataset cifar10:{target}")
