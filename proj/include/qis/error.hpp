#pragma once

#include <stdexcept>
#include <string>

namespace qis {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define QIS_DEFINE_ERROR(Name)          \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

QIS_DEFINE_ERROR(FormatError);
QIS_DEFINE_ERROR(GridError);
QIS_DEFINE_ERROR(ShapeError);
QIS_DEFINE_ERROR(UnitError);
QIS_DEFINE_ERROR(ConfigError);
QIS_DEFINE_ERROR(LabelError);
QIS_DEFINE_ERROR(NormError);
QIS_DEFINE_ERROR(DomainError);
QIS_DEFINE_ERROR(EmptyRegionError);
QIS_DEFINE_ERROR(DegenerateError);
QIS_DEFINE_ERROR(RegionTooSmallError);
QIS_DEFINE_ERROR(TransferError);
QIS_DEFINE_ERROR(IoError);
QIS_DEFINE_ERROR(DivergenceError);
// Thrown by a contrastive loss when no query in the batch has a positive;
// the trainer treats it as "skip this batch".
QIS_DEFINE_ERROR(BatchSkipError);

#undef QIS_DEFINE_ERROR

}  // namespace qis
