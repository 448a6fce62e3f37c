"""The 20 base classes of the common discipline scheme.

Codes are positions in the list below and never change between runs.  The
scheme follows the ANZSRC divisions, with 04/05 and 09/10 merged.
"""

from __future__ import annotations

from enum import IntEnum

NAMES = (
    "Mathematical Sciences",
    "Physical Sciences",
    "Chemical Sciences",
    "Earth and Environmental Sciences",
    "Biological Sciences",
    "Agricultural and Veterinary Sciences",
    "Information and Computing Sciences",
    "Engineering and Technology",
    "Medical and Health Sciences",
    "Built Environment and Design",
    "Education",
    "Economics",
    "Commerce, Management, Tourism and Services",
    "Studies in Human Society",
    "Psychology and Cognitive Sciences",
    "Law and Legal Studies",
    "Studies in Creative Arts and Writing",
    "Language, Communication and Culture",
    "History and Archaeology",
    "Philosophy and Religious Studies",
)

N_LABELS = len(NAMES)


class Discipline(IntEnum):
    MATHEMATICAL_SCIENCES = 0
    PHYSICAL_SCIENCES = 1
    CHEMICAL_SCIENCES = 2
    EARTH_AND_ENVIRONMENTAL_SCIENCES = 3
    BIOLOGICAL_SCIENCES = 4
    AGRICULTURAL_AND_VETERINARY_SCIENCES = 5
    INFORMATION_AND_COMPUTING_SCIENCES = 6
    ENGINEERING_AND_TECHNOLOGY = 7
    MEDICAL_AND_HEALTH_SCIENCES = 8
    BUILT_ENVIRONMENT_AND_DESIGN = 9
    EDUCATION = 10
    ECONOMICS = 11
    COMMERCE_MANAGEMENT_TOURISM_AND_SERVICES = 12
    STUDIES_IN_HUMAN_SOCIETY = 13
    PSYCHOLOGY_AND_COGNITIVE_SCIENCES = 14
    LAW_AND_LEGAL_STUDIES = 15
    STUDIES_IN_CREATIVE_ARTS_AND_WRITING = 16
    LANGUAGE_COMMUNICATION_AND_CULTURE = 17
    HISTORY_AND_ARCHAEOLOGY = 18
    PHILOSOPHY_AND_RELIGIOUS_STUDIES = 19

    @property
    def label(self) -> str:
        return NAMES[self.value]

    @classmethod
    def from_name(cls, name: str) -> "Discipline":
        """Look up a discipline by its display name (case-insensitive) or code."""
        key = " ".join(name.split()).casefold()
        if key.isdigit():
            code = int(key)
            if 0 <= code < N_LABELS:
                return cls(code)
            raise KeyError(name)
        for code, known in enumerate(NAMES):
            if known.casefold() == key:
                return cls(code)
        raise KeyError(name)


# ANZSRC (2008) two-digit division -> base class
ANZSRC_DIVISIONS = {
    "01": Discipline.MATHEMATICAL_SCIENCES,
    "02": Discipline.PHYSICAL_SCIENCES,
    "03": Discipline.CHEMICAL_SCIENCES,
    "04": Discipline.EARTH_AND_ENVIRONMENTAL_SCIENCES,
    "05": Discipline.EARTH_AND_ENVIRONMENTAL_SCIENCES,
    "06": Discipline.BIOLOGICAL_SCIENCES,
    "07": Discipline.AGRICULTURAL_AND_VETERINARY_SCIENCES,
    "08": Discipline.INFORMATION_AND_COMPUTING_SCIENCES,
    "09": Discipline.ENGINEERING_AND_TECHNOLOGY,
    "10": Discipline.ENGINEERING_AND_TECHNOLOGY,
    "11": Discipline.MEDICAL_AND_HEALTH_SCIENCES,
    "12": Discipline.BUILT_ENVIRONMENT_AND_DESIGN,
    "13": Discipline.EDUCATION,
    "14": Discipline.ECONOMICS,
    "15": Discipline.COMMERCE_MANAGEMENT_TOURISM_AND_SERVICES,
    "16": Discipline.STUDIES_IN_HUMAN_SOCIETY,
    "17": Discipline.PSYCHOLOGY_AND_COGNITIVE_SCIENCES,
    "18": Discipline.LAW_AND_LEGAL_STUDIES,
    "19": Discipline.STUDIES_IN_CREATIVE_ARTS_AND_WRITING,
    "20": Discipline.LANGUAGE_COMMUNICATION_AND_CULTURE,
    "21": Discipline.HISTORY_AND_ARCHAEOLOGY,
    "22": Discipline.PHILOSOPHY_AND_RELIGIOUS_STUDIES,
}

# pairs of ANZSRC divisions that collapse into one base class
MERGED_DIVISIONS = (
    (("04", "05"), Discipline.EARTH_AND_ENVIRONMENTAL_SCIENCES),
    (("09", "10"), Discipline.ENGINEERING_AND_TECHNOLOGY),
)
