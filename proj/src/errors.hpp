#ifndef MEDUSA_ERRORS_HPP
#define MEDUSA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace medusa {

// Error codes shared with the C API. Keep in sync with medusa.h.
enum class ErrorCode : int {
    ok = 0,
    usage = 1,
    runtime = 2,
    zero_votes = 10,
    parse_error = 11,
    missing_field = 12,
    invalid_spec = 13,
    missing_class = 20,
    empty_corpus = 21,
    shape_mismatch = 30,
    modality_missing = 31,
    all_masked_row = 32,
    stage_mismatch = 40,
    non_finite_loss = 41,
    unknown_id = 42,
    coverage_mismatch = 50,
    io_error = 60,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

#define MEDUSA_DEFINE_ERROR(Name, code_value)                                            \
    class Name : public Error {                                                          \
    public:                                                                              \
        explicit Name(const std::string& msg) : Error(ErrorCode::code_value, msg) {}     \
    }

MEDUSA_DEFINE_ERROR(ZeroVotesError, zero_votes);
MEDUSA_DEFINE_ERROR(ParseError, parse_error);
MEDUSA_DEFINE_ERROR(MissingFieldError, missing_field);
MEDUSA_DEFINE_ERROR(InvalidSpecError, invalid_spec);
MEDUSA_DEFINE_ERROR(MissingClassError, missing_class);
MEDUSA_DEFINE_ERROR(EmptyCorpusError, empty_corpus);
MEDUSA_DEFINE_ERROR(ShapeMismatchError, shape_mismatch);
MEDUSA_DEFINE_ERROR(ModalityMissingError, modality_missing);
MEDUSA_DEFINE_ERROR(AllMaskedRowError, all_masked_row);
MEDUSA_DEFINE_ERROR(StageMismatchError, stage_mismatch);
MEDUSA_DEFINE_ERROR(NonFiniteLossError, non_finite_loss);
MEDUSA_DEFINE_ERROR(UnknownIdError, unknown_id);
MEDUSA_DEFINE_ERROR(CoverageMismatchError, coverage_mismatch);
MEDUSA_DEFINE_ERROR(IoError, io_error);
MEDUSA_DEFINE_ERROR(UsageError, usage);

#undef MEDUSA_DEFINE_ERROR

}  // namespace medusa

#endif
