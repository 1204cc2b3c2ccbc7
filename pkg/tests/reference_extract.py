"""Line-by-line transcription of the reference extraction routine.

Kept deliberately separate from ``llmad.parser`` so it can serve as an
oracle.  Two typos in the printed listing (``in and``) are read as the
working string/token list.  The only other change: ``int(r)`` is guarded,
because ``str.isnumeric`` admits characters such as "½" that ``int``
rejects and the printed routine would crash on them.
"""


def _int_or_none(r):
    try:
        return int(r)
    except ValueError:
        return None


def parse_generation_results(ans, max_num=149):
    response_ret = []
    if ans.endswith("."):
        ans = ans.rstrip(".")
    ans = ans.rsplit(":->", 1)[-1]
    if ":" in ans:
        ans = ans.replace(":", " ")
    ans = ans.replace(",", "")
    ans = ans.split()
    if "no" in ans or "No" in ans or "None" in ans:
        return []
    for r in ans:
        if r.isnumeric() and "." not in r and _int_or_none(r) is not None and int(r) <= max_num:
            response_ret.append(int(r))
    return response_ret


def abstains(ans):
    """True when the routine returns through its "no"/"No"/"None" branch."""
    if ans.endswith("."):
        ans = ans.rstrip(".")
    ans = ans.rsplit(":->", 1)[-1].replace(":", " ").replace(",", "").split()
    return "no" in ans or "No" in ans or "None" in ans
