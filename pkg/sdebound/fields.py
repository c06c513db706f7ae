import numpy as np


class npfield(np.ndarray):
    """ Field declaration for a Record. Carries the numpy dtype (taken from the class name) plus
        a doc string and unit that end up in the CSV schema file.

        Example:
            class SolutionVec(Record):
                x1 = float64(doc='time coordinate')
    """

    def __new__(cls, input_=None, doc=None, unit=None):

        input_ = 0 if np.all(input_ == None) else input_

        ## cast single values as arrays
        input_ = [input_] if not isinstance(input_, (tuple, list, np.ndarray)) else input_

        obj = np.asarray(input_, dtype=cls.field_dtype()).view(cls)

        ## assign member variables
        obj.doc = doc
        obj.unit = unit

        return obj

    @classmethod
    def field_dtype(cls):
        ## dtype based on class name
        return np.dtype(cls.__name__.lower())

    def __array_finalize__(self, obj):
        ## required method of subclasses of numpy. Sets unique member variables of new instances
        if obj is None: return

        self.doc = getattr(obj, 'doc', "")
        self.unit = getattr(obj, 'unit', None)

    def __array_wrap__(self, out_arr, context=None, return_scalar=False):
        return out_arr.astype(self.field_dtype())


class int64(npfield):
    fmt = '%d'

class float64(npfield):
    fmt = '%.17g'

class flag(npfield):
    """ Boolean column, written as 0/1 """
    fmt = '%d'

    @classmethod
    def field_dtype(cls):
        return np.dtype(np.bool_)

class text(npfield):
    """ Short label column (scheme names). """
    fmt = '%s'
    width = 32

    def __new__(cls, input_='', doc=None, unit=None):
        obj = np.asarray([input_], dtype=cls.field_dtype()).view(cls)
        obj.doc = doc
        obj.unit = unit
        return obj

    @classmethod
    def field_dtype(cls):
        return np.dtype('U{}'.format(cls.width))
