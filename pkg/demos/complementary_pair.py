"""Two half-informed models talking each other into the right answer.

The constructed scenario gives model f reliable scores for the first two
words of every reference and a mild noise habit on the last two; model g is
the mirror image.  Decoded alone, each produces text that is exactly half
right.  The guided exchange runs f, lets g search under a pull toward f's
candidates, then lets f search again under a pull toward g's — and the
final output is the full reference.

Run:  python3 demos/complementary_pair.py
"""

from duet.scoring import SourceView
from duet.synthetic import complementary_scenario
from duet.textspec import sequence_to_text
from duet.twist import DecodeSession, GuidanceConfig, isolation_decode, twist_decode

VIEW = SourceView("plain", ("source",))


def main():
    sc = complementary_scenario()
    print("vocabulary:", ", ".join(sc.spec.vocabulary.entries[3:]))
    print("guidance weights: lambda_f=%.1f lambda_g=%.1f" % (sc.lambda_f, sc.lambda_g))
    print()

    for source, reference in zip(sc.sources, sc.references):
        print("=== %s ===" % source)
        print("reference:     %s" % reference)
        print("f alone:       %s" % sequence_to_text(isolation_decode(sc.f, source, sc.beam)))
        print("g alone:       %s" % sequence_to_text(isolation_decode(sc.g, source, sc.beam)))

        session = DecodeSession(
            model_f=sc.f,
            view_f=VIEW,
            model_g=sc.g,
            view_g=VIEW,
            record={"source": source},
            beam=sc.beam,
            guidance=GuidanceConfig(lambda_f=sc.lambda_f, lambda_g=sc.lambda_g),
        )
        out, trace = twist_decode(session)
        print("f and g:       %s" % sequence_to_text(out))
        print("pass by pass:")
        for record in trace.passes:
            top = record.candidates.top()
            print(
                "  %-9s top=%-28r  model=%7.3f  penalty=%5.2f"
                % (
                    record.label,
                    sequence_to_text(top.seq),
                    top.model_score,
                    top.penalty,
                )
            )
        print()


if __name__ == "__main__":
    main()
