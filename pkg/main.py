"""
Random Projection Hash Toolkit
Main entry point - run one experiment or estimator per invocation

    python main.py sweep --sigma -2.0 --a 1 --b 2 --trials 100000
    python main.py estimate --gram -0.3333333333 -0.3333333333 -0.3333333333 --a 2 --b 1 --numeric
"""

import sys

from rphash.cli import main as run


def main():
    """Main processing function"""
    try:
        sys.exit(run(sys.argv[1:]))
    except KeyboardInterrupt:
        print("\n\n⚠ Process interrupted by user", file=sys.stderr)
        sys.exit(1)
    except Exception as e:
        print(f"\n\n❌ Error during processing: {e}", file=sys.stderr)
        import traceback
        traceback.print_exc()
        sys.exit(1)


if __name__ == "__main__":
    main()
