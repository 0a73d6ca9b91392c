"""Builds the extension with cargo and copies it next to this script."""

import shutil
import subprocess
import sys
import sysconfig
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def main():
    profile = "release" if "--release" in sys.argv else "debug"
    cmd = ["cargo", "build", "-p", "expertscope-py", "--features", "extension-module"]
    if profile == "release":
        cmd.append("--release")
    subprocess.run(cmd, cwd=ROOT, check=True)
    built = ROOT / "target" / profile / "libexpertscope_py.so"
    dest = Path(__file__).resolve().parent / ("expertscope_py" + sysconfig.get_config_var("EXT_SUFFIX"))
    shutil.copyfile(built, dest)
    print(dest)


if __name__ == "__main__":
    main()
