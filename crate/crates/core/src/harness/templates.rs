//! Task families for the synthetic corpus.
//!
//! Every canonical solution is loop-bounded (no `while`), so a mutated
//! variant can fail but never hang. Sibling families look alike and differ
//! in one requirement; they are the preferred donors for misaligned pages.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Family {
    pub name: &'static str,
    pub title: &'static str,
    pub description: &'static str,
    pub code: &'static str,
    /// `(arguments, expected)` literals.
    pub tests: &'static [(&'static str, &'static str)],
    pub sibling: Option<&'static str>,
}

pub fn family(name: &str) -> Option<&'static Family> {
    FAMILIES.iter().find(|f| f.name == name)
}

pub const FAMILIES: &[Family] = &[
    Family {
        name: "top_k_products",
        title: "Efficient way to find top K products given two lists",
        description: "Given two lists of integers a and b and an integer k, return the k largest products x * y with x from a and y from b, in descending order. Lists may contain negative numbers.",
        code: "def top_k_products(a, b, k):\n    products = []\n    for x in a:\n        for y in b:\n            products.append(x * y)\n    products.sort(reverse=True)\n    return products[0:k]\n",
        tests: &[
            ("[1, 2], [3, 4], 2", "[8, 6]"),
            ("[-5, 1], [-4, 2], 1", "[20]"),
            ("[0, 3], [7], 2", "[21, 0]"),
            ("[1, -1], [2, -2], 3", "[2, 2, -2]"),
        ],
        sibling: None,
    },
    Family {
        name: "same_chars",
        title: "Check whether two words use the same set of characters",
        description: "Return True if the strings s0 and s1 are built from exactly the same set of distinct characters, ignoring how often each character occurs.",
        code: "def same_chars(s0, s1):\n    return set(s0) == set(s1)\n",
        tests: &[
            ("'abcd', 'dddcba'", "True"),
            ("'abc', 'abd'", "False"),
            ("'aab', 'ab'", "True"),
            ("'', 'a'", "False"),
        ],
        sibling: Some("same_chars_counted"),
    },
    Family {
        name: "same_chars_counted",
        title: "Check whether two strings have the same characters with the same counts",
        description: "Return True if s1 is a rearrangement of s0, so every character occurs the same number of times in both strings.",
        code: "def same_chars_counted(s0, s1):\n    return sorted(s0) == sorted(s1)\n",
        tests: &[
            ("'abc', 'cab'", "True"),
            ("'aab', 'ab'", "False"),
            ("'abcd', 'dddcba'", "False"),
            ("'xy', 'xz'", "False"),
        ],
        sibling: Some("same_chars"),
    },
    Family {
        name: "count_positive",
        title: "Count the strictly positive numbers in a list",
        description: "Return how many elements of xs are strictly greater than zero.",
        code: "def count_positive(xs):\n    count = 0\n    for x in xs:\n        if x > 0:\n            count += 1\n    return count\n",
        tests: &[("[1, -2, 3]", "2"), ("[0, 0]", "0"), ("[]", "0"), ("[-1, 5, 0, 7]", "2")],
        sibling: Some("count_nonnegative"),
    },
    Family {
        name: "count_nonnegative",
        title: "Count the non-negative numbers in a list",
        description: "Return how many elements of xs are greater than or equal to zero.",
        code: "def count_nonnegative(xs):\n    count = 0\n    for x in xs:\n        if x >= 0:\n            count += 1\n    return count\n",
        tests: &[("[1, -2, 3]", "2"), ("[0, 0]", "2"), ("[]", "0"), ("[-1, 5, 0, 7]", "3")],
        sibling: Some("count_positive"),
    },
    Family {
        name: "sum_even",
        title: "Sum of the even numbers in a list",
        description: "Return the sum of the elements of xs whose value is even.",
        code: "def sum_even(xs):\n    total = 0\n    for x in xs:\n        if x % 2 == 0:\n            total += x\n    return total\n",
        tests: &[("[1, 2, 3, 4]", "6"), ("[]", "0"), ("[5, 7]", "0"), ("[-2, 3, 10]", "8")],
        sibling: Some("sum_even_index"),
    },
    Family {
        name: "sum_even_index",
        title: "Sum of the elements at even positions",
        description: "Return the sum of the elements of xs that sit at even indices (0, 2, 4, ...).",
        code: "def sum_even_index(xs):\n    total = 0\n    for i in range(len(xs)):\n        if i % 2 == 0:\n            total += xs[i]\n    return total\n",
        tests: &[("[1, 2, 3, 4]", "4"), ("[]", "0"), ("[5, 7]", "5"), ("[-2, 3, 10]", "8")],
        sibling: Some("sum_even"),
    },
    Family {
        name: "second_largest",
        title: "Second largest element of a list, duplicates allowed",
        description: "Return the second element of xs in descending order, counting duplicates separately, or None when xs has fewer than two elements.",
        code: "def second_largest(xs):\n    if len(xs) < 2:\n        return None\n    ordered = sorted(xs, reverse=True)\n    return ordered[1]\n",
        tests: &[("[3, 1, 2]", "2"), ("[5, 5, 1]", "5"), ("[7]", "None"), ("[-1, -3, -2]", "-2")],
        sibling: Some("second_largest_distinct"),
    },
    Family {
        name: "second_largest_distinct",
        title: "Second largest distinct value in a list",
        description: "Return the second largest distinct value of xs, or None when xs has fewer than two distinct values.",
        code: "def second_largest_distinct(xs):\n    values = sorted(set(xs), reverse=True)\n    if len(values) < 2:\n        return None\n    return values[1]\n",
        tests: &[("[3, 1, 2]", "2"), ("[5, 5, 1]", "1"), ("[7, 7]", "None"), ("[-1, -3, -2]", "-2")],
        sibling: Some("second_largest"),
    },
    Family {
        name: "is_palindrome",
        title: "Check if a string is a palindrome",
        description: "Return True if s reads the same forwards and backwards. The comparison is case sensitive.",
        code: "def is_palindrome(s):\n    return s == s[::-1]\n",
        tests: &[("'aba'", "True"), ("'Aba'", "False"), ("'ab'", "False"), ("''", "True")],
        sibling: Some("is_palindrome_ignore_case"),
    },
    Family {
        name: "is_palindrome_ignore_case",
        title: "Case-insensitive palindrome check",
        description: "Return True if s reads the same forwards and backwards once upper and lower case are treated as equal.",
        code: "def is_palindrome_ignore_case(s):\n    t = s.lower()\n    return t == t[::-1]\n",
        tests: &[("'aba'", "True"), ("'Aba'", "True"), ("'ab'", "False"), ("'Noon'", "True")],
        sibling: Some("is_palindrome"),
    },
    Family {
        name: "running_max",
        title: "Running maximum of a list",
        description: "Return a list whose i-th element is the largest value among xs[0..i].",
        code: "def running_max(xs):\n    out = []\n    best = None\n    for x in xs:\n        if best is None or x > best:\n            best = x\n        out.append(best)\n    return out\n",
        tests: &[("[1, 3, 2, 5]", "[1, 3, 3, 5]"), ("[]", "[]"), ("[-1, -2]", "[-1, -1]"), ("[2, 2, 1]", "[2, 2, 2]")],
        sibling: None,
    },
    Family {
        name: "first_repeated",
        title: "Find the first element that appears twice",
        description: "Scan xs from the left and return the first element equal to an earlier element, or None when all elements are distinct.",
        code: "def first_repeated(xs):\n    seen = set()\n    for x in xs:\n        if x in seen:\n            return x\n        seen.add(x)\n    return None\n",
        tests: &[("[1, 2, 3, 2, 1]", "2"), ("[1, 2, 3]", "None"), ("[]", "None"), ("[4, 4]", "4")],
        sibling: None,
    },
    Family {
        name: "fizz_count",
        title: "Count numbers up to n divisible by 3 or 5",
        description: "Return how many integers i with 1 <= i <= n are divisible by 3 or by 5.",
        code: "def fizz_count(n):\n    count = 0\n    for i in range(1, n + 1):\n        if i % 3 == 0 or i % 5 == 0:\n            count += 1\n    return count\n",
        tests: &[("15", "7"), ("1", "0"), ("5", "2"), ("10", "5")],
        sibling: None,
    },
    Family {
        name: "digit_sum",
        title: "Sum of the decimal digits of an integer",
        description: "Return the sum of the decimal digits of the integer n; the sign is ignored.",
        code: "def digit_sum(n):\n    total = 0\n    for ch in str(abs(n)):\n        total += int(ch)\n    return total\n",
        tests: &[("123", "6"), ("0", "0"), ("-45", "9"), ("9999", "36")],
        sibling: None,
    },
    Family {
        name: "clamp_list",
        title: "Clamp every value of a list into a range",
        description: "Return a copy of xs where every value below lo is replaced by lo and every value above hi is replaced by hi.",
        code: "def clamp_list(xs, lo, hi):\n    out = []\n    for x in xs:\n        if x < lo:\n            out.append(lo)\n        elif x > hi:\n            out.append(hi)\n        else:\n            out.append(x)\n    return out\n",
        tests: &[
            ("[1, 5, 10], 2, 8", "[2, 5, 8]"),
            ("[], 0, 1", "[]"),
            ("[3], 3, 3", "[3]"),
            ("[-5, 0, 5], -1, 1", "[-1, 0, 1]"),
        ],
        sibling: None,
    },
    Family {
        name: "count_vowels",
        title: "Count vowels in a string",
        description: "Return the number of characters of s that are vowels (a, e, i, o, u) in either case.",
        code: "def count_vowels(s):\n    count = 0\n    for ch in s.lower():\n        if ch in \"aeiou\":\n            count += 1\n    return count\n",
        tests: &[("'hello'", "2"), ("'SKY'", "0"), ("''", "0"), ("'AeIoU'", "5")],
        sibling: None,
    },
    Family {
        name: "pairs_with_sum",
        title: "Count pairs of list elements with a given sum",
        description: "Return how many index pairs i < j satisfy xs[i] + xs[j] == target.",
        code: "def pairs_with_sum(xs, target):\n    count = 0\n    for i in range(len(xs)):\n        for j in range(i + 1, len(xs)):\n            if xs[i] + xs[j] == target:\n                count += 1\n    return count\n",
        tests: &[("[1, 2, 3, 4], 5", "2"), ("[], 3", "0"), ("[2, 2, 2], 4", "3"), ("[1, -1, 0], 0", "1")],
        sibling: None,
    },
    Family {
        name: "rotate_left",
        title: "Rotate a list to the left by k positions",
        description: "Return xs rotated left by k positions; k may exceed the length of the list.",
        code: "def rotate_left(xs, k):\n    if not xs:\n        return []\n    k = k % len(xs)\n    return xs[k:] + xs[:k]\n",
        tests: &[("[1, 2, 3, 4], 1", "[2, 3, 4, 1]"), ("[], 3", "[]"), ("[1, 2], 3", "[2, 1]"), ("[5, 6, 7], 0", "[5, 6, 7]")],
        sibling: None,
    },
    Family {
        name: "longest_run",
        title: "Length of the longest run of equal adjacent values",
        description: "Return the length of the longest block of consecutive equal elements in xs, or 0 for an empty list.",
        code: "def longest_run(xs):\n    best = 0\n    current = 0\n    previous = None\n    for x in xs:\n        if x == previous:\n            current += 1\n        else:\n            current = 1\n        previous = x\n        best = max(best, current)\n    return best\n",
        tests: &[("[1, 1, 2, 2, 2, 3]", "3"), ("[]", "0"), ("[5]", "1"), ("[1, 2, 1, 2]", "1")],
        sibling: None,
    },
    Family {
        name: "merge_sorted",
        title: "Merge two sorted lists",
        description: "Given two lists a and b sorted in ascending order, return one ascending list holding all of their elements.",
        code: "def merge_sorted(a, b):\n    out = []\n    i = 0\n    j = 0\n    for _ in range(len(a) + len(b)):\n        if j >= len(b) or (i < len(a) and a[i] <= b[j]):\n            out.append(a[i])\n            i += 1\n        else:\n            out.append(b[j])\n            j += 1\n    return out\n",
        tests: &[("[1, 3, 5], [2, 4]", "[1, 2, 3, 4, 5]"), ("[], [1]", "[1]"), ("[2], []", "[2]"), ("[1, 1], [1]", "[1, 1, 1]")],
        sibling: None,
    },
    Family {
        name: "prefix_sums",
        title: "Prefix sums of a list",
        description: "Return the list of running totals of xs, so element i is xs[0] + ... + xs[i].",
        code: "def prefix_sums(xs):\n    out = []\n    total = 0\n    for x in xs:\n        total += x\n        out.append(total)\n    return out\n",
        tests: &[("[1, 2, 3]", "[1, 3, 6]"), ("[]", "[]"), ("[-1, 1]", "[-1, 0]"), ("[5]", "[5]")],
        sibling: None,
    },
    Family {
        name: "unique_in_order",
        title: "Collapse runs of repeated elements",
        description: "Return the elements of xs with every run of equal adjacent elements collapsed to a single element, keeping the original order.",
        code: "def unique_in_order(xs):\n    out = []\n    for x in xs:\n        if not out or out[-1] != x:\n            out.append(x)\n    return out\n",
        tests: &[("[1, 1, 2, 2, 1]", "[1, 2, 1]"), ("[]", "[]"), ("'aaab'", "['a', 'b']"), ("[3]", "[3]")],
        sibling: None,
    },
    Family {
        name: "index_of_min",
        title: "Index of the smallest element",
        description: "Return the index of the first occurrence of the smallest element of the non-empty list xs.",
        code: "def index_of_min(xs):\n    best = 0\n    for i in range(1, len(xs)):\n        if xs[i] < xs[best]:\n            best = i\n    return best\n",
        tests: &[("[3, 1, 2]", "1"), ("[5]", "0"), ("[2, 2, 1, 1]", "2"), ("[-1, 0]", "0")],
        sibling: None,
    },
    Family {
        name: "below_threshold",
        title: "Check that all values are below a threshold",
        description: "Return True if every element of xs is strictly smaller than t.",
        code: "def below_threshold(xs, t):\n    for x in xs:\n        if x >= t:\n            return False\n    return True\n",
        tests: &[("[1, 2, 3], 5", "True"), ("[1, 20], 10", "False"), ("[], 0", "True"), ("[5], 5", "False")],
        sibling: None,
    },
    Family {
        name: "triangle_number",
        title: "Compute the n-th triangle number",
        description: "Return the sum 1 + 2 + ... + n for a non-negative integer n.",
        code: "def triangle_number(n):\n    return n * (n + 1) // 2\n",
        tests: &[("1", "1"), ("4", "10"), ("0", "0"), ("10", "55")],
        sibling: None,
    },
];
